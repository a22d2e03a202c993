#include "dckit/cli.hpp"

int main(int argc, char** argv) { return dckit::cli::run(argc, argv); }
