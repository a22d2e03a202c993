#include "dckit/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dckit/diffusion.hpp"
#include "dckit/digest.hpp"
#include "dckit/embedding_store.hpp"
#include "dckit/errors.hpp"
#include "dckit/kernels.hpp"
#include "dckit/metrics.hpp"
#include "dckit/sampler.hpp"

namespace dckit::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitIoFormat = 1;
constexpr int kExitPrecondition = 2;
constexpr int kExitConformance = 3;

// All artifacts are written via temp file + rename so partial output never
// lands under the target name.
void write_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open output file: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

MatchMode parse_mode(const std::string& mode) {
    if (mode == "similarity") return MatchMode::similarity;
    if (mode == "distance") return MatchMode::distance;
    throw ValidationError("unknown --distance-mode value: " + mode);
}

struct MetricsArgs {
    std::string ids, real_styles, gen_styles, out;
    double tau = 0.3;
    int knn = 3;
    std::string mode = "similarity";
};

int cmd_metrics(const MetricsArgs& args) {
    MetricParams params;
    params.tau = args.tau;
    params.k_nn = args.knn;
    params.mode = parse_mode(args.mode);

    const LabeledEmbeddingSet ids = read_embedding_file(args.ids);
    std::optional<StyleFeatureSet> real_styles, gen_styles;
    if (!args.real_styles.empty()) real_styles = read_style_file(args.real_styles);
    if (!args.gen_styles.empty()) gen_styles = read_style_file(args.gen_styles);
    if (real_styles.has_value() != gen_styles.has_value())
        throw ValidationError("metrics: provide both --real-styles and --gen-styles or neither");

    MetricReport report =
        metric_report(ids, real_styles ? &*real_styles : nullptr,
                      gen_styles ? &*gen_styles : nullptr, params);
    report.input_digests["ids"] = file_digest_hex(args.ids);
    if (real_styles) {
        report.input_digests["real_styles"] = file_digest_hex(args.real_styles);
        report.input_digests["gen_styles"] = file_digest_hex(args.gen_styles);
    }
    write_atomic(args.out, report_to_json(report));
    return kExitOk;
}

struct SampleArgs {
    std::string candidates, reference, style_bank, plan, out;
    std::string mode = "similarity";
};

int cmd_sample(const SampleArgs& args) {
    std::ifstream plan_in(args.plan);
    if (!plan_in) throw IoError("cannot open plan file: " + args.plan);
    std::stringstream plan_text;
    plan_text << plan_in.rdbuf();
    const SamplingPlan plan = plan_from_json(plan_text.str());

    const LabeledEmbeddingSet candidates = read_embedding_file(args.candidates);
    const LabeledEmbeddingSet reference = read_embedding_file(args.reference);
    const LabeledEmbeddingSet style_bank = read_embedding_file(args.style_bank);

    const SamplingResult result =
        run_sampling_pipeline(candidates, reference, style_bank, plan, parse_mode(args.mode));

    std::string lines;
    for (const auto& pair : result.pairs) {
        lines += pair_to_json_line(pair);
        lines += '\n';
    }
    write_atomic(args.out, lines);

    nlohmann::json meta;
    meta["config"] = {
        {"candidates", args.candidates},
        {"reference", args.reference},
        {"style_bank", args.style_bank},
        {"plan", args.plan},
        {"distance_mode", args.mode},
    };
    std::ifstream plan_again(args.plan);
    nlohmann::json plan_json;
    plan_again >> plan_json;
    meta["plan"] = plan_json;
    meta["input_digests"] = {
        {"candidates", file_digest_hex(args.candidates)},
        {"reference", file_digest_hex(args.reference)},
        {"style_bank", file_digest_hex(args.style_bank)},
        {"plan", file_digest_hex(args.plan)},
    };
    meta["stage_counts"] = {
        {"total", result.counts.total},
        {"after_dedup", result.counts.after_dedup},
        {"after_attribute", result.counts.after_attribute},
        {"after_unique", result.counts.after_unique},
        {"selected", result.counts.selected},
    };
    write_atomic(args.out + ".meta.json", meta.dump(2) + "\n");

    std::cerr << "sample stages: total=" << result.counts.total
              << " after_dedup=" << result.counts.after_dedup
              << " after_attribute=" << result.counts.after_attribute
              << " after_unique=" << result.counts.after_unique
              << " selected=" << result.counts.selected << " pairs=" << result.pairs.size()
              << "\n";
    return kExitOk;
}

struct CurveArgs {
    std::string features, out;
    double tau = 0.3;
    std::vector<std::size_t> checkpoints;
    std::string mode = "similarity";
};

int cmd_unique_curve(const CurveArgs& args) {
    const LabeledEmbeddingSet features = read_embedding_file(args.features);
    const auto curve = unique_count_curve(features.flat(), features.dim(), args.tau,
                                          args.checkpoints, parse_mode(args.mode));
    std::ostringstream out;
    out << "# dckit unique-curve\n";
    out << "# features=" << args.features << " digest=" << file_digest_hex(args.features) << "\n";
    out << "# tau=" << args.tau << " mode=" << args.mode << "\n";
    out << "n,unique_count\n";
    for (const auto& [n, count] : curve) out << n << "," << count << "\n";
    write_atomic(args.out, out.str());
    return kExitOk;
}

struct KernelCheckArgs {
    std::string out;
    std::uint64_t seed = 0;
    bool inject_bad_schedule = false; // hidden test hook
};

int cmd_kernel_check(const KernelCheckArgs& args) {
    std::vector<CheckResult> results;
    if (args.inject_bad_schedule) {
        ScheduleTable bad = make_schedule(1000, 1e-4, 0.02);
        std::swap(bad.alpha_bars[100], bad.alpha_bars[700]); // breaks monotonicity
        results = kernel_check(args.seed, &bad);
    } else {
        results = kernel_check(args.seed);
    }
    nlohmann::json j;
    bool all_pass = true;
    for (const auto& r : results) {
        j[r.name] = {{"pass", r.pass}, {"max_abs_error", r.max_abs_error}};
        all_pass = all_pass && r.pass;
    }
    if (!args.out.empty())
        write_atomic(args.out, j.dump(2) + "\n");
    else
        std::cout << j.dump(2) << "\n";
    return all_pass ? kExitOk : kExitConformance;
}

struct FidArgs {
    std::string a, b, out;
};

int cmd_fid(const FidArgs& args) {
    const StyleFeatureSet sa = read_style_file(args.a);
    const StyleFeatureSet sb = read_style_file(args.b);
    const double value = fid(sa, sb);
    nlohmann::json j;
    j["fid"] = value;
    j["config"] = {{"a", args.a}, {"b", args.b}};
    j["input_digests"] = {{"a", file_digest_hex(args.a)}, {"b", file_digest_hex(args.b)}};
    write_atomic(args.out, j.dump(2) + "\n");
    return kExitOk;
}

} // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"dckit: labeled-dataset quality metrics, condition sampling and "
                 "diffusion kernel checks"};
    app.require_subcommand(1);

    MetricsArgs margs;
    auto* metrics = app.add_subcommand("metrics", "Compute U/C/D metrics and FID");
    metrics->add_option("--ids", margs.ids, "identity embedding file")->required();
    metrics->add_option("--real-styles", margs.real_styles, "real style feature file");
    metrics->add_option("--gen-styles", margs.gen_styles, "generated style feature file");
    metrics->add_option("--tau", margs.tau, "match threshold")->capture_default_str();
    metrics->add_option("--knn", margs.knn, "k for the diversity radius")->capture_default_str();
    metrics->add_option("--distance-mode", margs.mode, "similarity|distance")
        ->capture_default_str();
    metrics->add_option("--out", margs.out, "report JSON path")->required();

    SampleArgs sargs;
    auto* sample = app.add_subcommand("sample", "Run the condition-sampling pipeline");
    sample->add_option("--candidates", sargs.candidates, "ID candidate embedding file")
        ->required();
    sample->add_option("--reference", sargs.reference, "reference bank embedding file")
        ->required();
    sample->add_option("--style-bank", sargs.style_bank, "style bank embedding file")->required();
    sample->add_option("--plan", sargs.plan, "sampling plan JSON")->required();
    sample->add_option("--distance-mode", sargs.mode, "similarity|distance")
        ->capture_default_str();
    sample->add_option("--out", sargs.out, "output JSON-lines path")->required();

    CurveArgs cargs;
    auto* curve = app.add_subcommand("unique-curve", "Unique-count growth curve");
    curve->add_option("--features", cargs.features, "embedding file")->required();
    curve->add_option("--tau", cargs.tau, "match threshold")->capture_default_str();
    curve->add_option("--checkpoints", cargs.checkpoints, "ascending sample sizes")
        ->required()
        ->delimiter(',');
    curve->add_option("--distance-mode", cargs.mode, "similarity|distance")
        ->capture_default_str();
    curve->add_option("--out", cargs.out, "output CSV path")->required();

    KernelCheckArgs kargs;
    auto* kcheck = app.add_subcommand("kernel-check", "Diffusion kernel conformance report");
    kcheck->add_option("--seed", kargs.seed, "fixture seed")->capture_default_str();
    kcheck->add_option("--out", kargs.out, "report JSON path (stdout if omitted)");
    kcheck->add_flag("--inject-bad-schedule", kargs.inject_bad_schedule)->group("");

    FidArgs fargs;
    auto* fid_cmd = app.add_subcommand("fid", "Frechet distance between two style sets");
    fid_cmd->add_option("--a", fargs.a, "style feature file")->required();
    fid_cmd->add_option("--b", fargs.b, "style feature file")->required();
    fid_cmd->add_option("--out", fargs.out, "output JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*metrics) return cmd_metrics(margs);
        if (*sample) return cmd_sample(sargs);
        if (*curve) return cmd_unique_curve(cargs);
        if (*kcheck) return cmd_kernel_check(kargs);
        if (*fid_cmd) return cmd_fid(fargs);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::io_format ? kExitIoFormat : kExitPrecondition;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIoFormat;
    }
    return kExitOk;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage = args;
    std::vector<const char*> argv;
    argv.push_back("dckit");
    for (const auto& a : storage) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace dckit::cli
