#include "massnet/cli.hpp"

#include "massnet/config.hpp"
#include "massnet/errors.hpp"
#include "massnet/evaluation.hpp"
#include "massnet/synthetic.hpp"
#include "massnet/timeseries.hpp"
#include "massnet/training.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>

namespace massnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path runs_root(const fs::path& configured) {
    if (const char* env = std::getenv("MASSCON_RUNS_DIR"); env != nullptr && *env != '\0') return env;
    return configured;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

// Native datasets declare their format in meta.json; anything else is read as
// the SLP layout.
FormatId detect_format(const fs::path& root) {
    const fs::path meta = root / "meta.json";
    if (!fs::exists(meta)) return FormatId::slp_pm;
    std::ifstream in(meta);
    try {
        return format_from_string(json::parse(in).at("format_id").get<std::string>());
    } catch (const json::exception& e) {
        throw FormatError(meta.string() + ": " + e.what());
    }
}

Dataset load_any(const fs::path& root, const std::string& format) {
    return load_dataset(root, format.empty() ? detect_format(root) : format_from_string(format));
}

struct Splits {
    Dataset train, val, test;
};

Splits load_experiment_data(const ExperimentConfig& cfg) {
    if (!fs::exists(cfg.dataset_path)) throw ConfigError("dataset path does not exist: " + cfg.dataset_path.string());
    const Dataset data = load_dataset(cfg.dataset_path, cfg.dataset_format);
    const SplitSpec split = resolve_split(data, cfg.split);
    // Random k-fold mixes a subject's frames across folds by design.
    check_split(data, split, cfg.split.strategy != SplitStrategy::random_kfold);
    return {data.subset(split.train), data.subset(split.val), data.subset(split.test)};
}

ExperimentConfig load_config(const std::string& path, const std::string& name) {
    ExperimentConfig cfg = load_experiment_config(path);
    if (!name.empty()) cfg.name = name;
    cfg.validate();
    return cfg;
}

int cmd_train(const std::string& config, const std::string& name, std::ostream& out) {
    const ExperimentConfig cfg = load_config(config, name);
    const Splits data = load_experiment_data(cfg);
    const fs::path run_dir = runs_root(cfg.output_dir) / cfg.name;
    fs::create_directories(run_dir);
    save_experiment_config(cfg, run_dir / "config.json");

    train::TrainOptions opts;
    opts.run_dir = run_dir;
    opts.on_epoch = [&out](const train::EpochRecord& r) {
        out << fmt::format("epoch {:3d}  lr {:.2e}  l_mae {:.4f}  l_con {:.4f}  l_all {:.4f}", r.epoch, r.lr, r.l_mae,
                           r.l_con, r.l_all);
        if (r.val_mae) out << fmt::format("  val_mae {:.4f}  val_mape {:.3f}", *r.val_mae, *r.val_mape);
        out << '\n';
    };
    const Dataset* val = data.val.empty() ? nullptr : &data.val;
    auto result = train::train_model(cfg.model, cfg.preprocess, data.train, val, cfg.train, opts);
    out << "stopped: " << result.state.stop_reason << '\n';

    if (!data.test.empty()) {
        eval::MassNetRegressor model(result.model, result.input);
        eval::LinearRegressor linear(eval::linear_fit_baseline(data.train));
        const auto rep = eval::evaluate_report(model, data.test);
        const auto lin = eval::evaluate_report(linear, data.test);
        json j{{"massnet", json::parse(rep.to_json())}, {"linear_fit", json::parse(lin.to_json())}};
        write_text(run_dir / "report.json", j.dump(2));
        write_text(run_dir / "report.txt", "massnet\n" + rep.to_text() + "\nlinear_fit\n" + lin.to_text());
        out << "test: " << rep.to_text();
    }
    out << "run_dir=" << run_dir.string() << '\n';
    if (result.state.diverged) throw NumericError(result.state.stop_reason + " (last good checkpoint kept)");
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const std::string& format, const std::string& json_out,
             std::ostream& out) {
    auto ck = train::load_checkpoint(ckpt);
    const Dataset data = load_any(data_path, format);
    eval::MassNetRegressor model(std::move(ck.model), ck.input);
    const auto rep = eval::evaluate_report(model, data);
    if (!json_out.empty()) write_text(json_out, rep.to_json());
    out << rep.to_text();
    return kExitOk;
}

int cmd_predict(const std::string& ckpt, const std::string& frame_path, const std::string& joints_path, std::ostream& out) {
    auto ck = train::load_checkpoint(ckpt);
    Sample s;
    s.frame = read_frame_csv(frame_path);
    s.subject_id = "query";
    s.weight_kg = 1.0;  // placeholder label, never read
    if (!joints_path.empty()) {
        std::ifstream in(joints_path);
        if (!in) throw LoadError("cannot open joints file " + joints_path);
        JointSet js;
        try {
            for (const auto& p : json::parse(in)) js.coords.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        } catch (const json::exception& e) {
            throw FormatError(joints_path + ": " + e.what());
        }
        s.joints = std::move(js);
    }
    const Dataset one(FormatId::massnet_static, {std::move(s)});
    const auto preds = train::predict(ck.model, ck.input, one, 1);
    out << fmt::format("weight_kg={}", preds.front()) << '\n';
    return kExitOk;
}

int cmd_ablate(const std::string& config, const std::string& name, const std::string& axis_name, std::ostream& out) {
    const auto axis = [&] {
        try {
            return eval::ablation_axis_from_string(axis_name);
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
    }();
    const ExperimentConfig cfg = load_config(config, name);
    const Splits data = load_experiment_data(cfg);
    if (data.test.empty()) throw ConfigError("the configured split leaves no test set for the ablation");
    const fs::path dir = runs_root(cfg.output_dir) / cfg.name / ("ablation_" + axis_name);
    fs::create_directories(dir);
    save_experiment_config(cfg, dir / "config.json");
    const auto table = eval::run_ablation(axis, cfg.model, cfg.preprocess, cfg.train,
                                          {&data.train, data.val.empty() ? nullptr : &data.val, &data.test}, dir);
    write_text(dir / "ablation.csv", table.to_csv());
    write_text(dir / "ablation.json", table.to_json());
    write_text(dir / "ablation.txt", table.to_text());
    out << table.to_text();
    return kExitOk;
}

struct SynthArgs {
    int n = 100;
    std::uint64_t seed = 0;
    std::string out;
    int spp = 5;
    double weight_min = 40.0, weight_max = 105.0;
    double saturation = -1.0;
    double noise = 0.0;
    double gain = 0.0;
    bool no_joints = false;
    bool dynamic = false;
    int frames = 1200, movements = 14, movement_frames = 30;
    double weight = 62.0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    if (a.dynamic) {
        synth::SessionConfig sc;
        sc.n_frames = a.frames;
        sc.n_movements = a.movements;
        sc.movement_frames = a.movement_frames;
        sc.weight_kg = a.weight;
        sc.seed = a.seed;
        const auto session = synth::synthesize_session(sc);
        save_dataset(session.to_dataset(), a.out);
        json mv = json::array();
        for (const auto& [s, e] : session.movements) mv.push_back({s, e});
        write_text(fs::path(a.out) / "movements.json", json{{"weight_kg", session.weight_kg}, {"movements", mv}}.dump(2));
        out << "wrote " << session.frames.size() << " frames to " << a.out << '\n';
        return kExitOk;
    }
    synth::SyntheticConfig sc;
    sc.n_samples = a.n;
    sc.samples_per_subject = a.spp;
    sc.weight_min = a.weight_min;
    sc.weight_max = a.weight_max;
    sc.seed = a.seed;
    sc.noise_rel = a.noise;
    sc.gain_sigma = a.gain;
    if (a.saturation >= 0.0) sc.saturation_quantile = a.saturation;
    sc.with_joints = !a.no_joints;
    const auto generated = synth::synthesize_dataset(sc);
    save_dataset(generated.dataset, a.out);
    out << "wrote " << generated.dataset.size() << " samples to " << a.out << '\n';
    return kExitOk;
}

struct SegmentArgs {
    std::string data;
    std::string ckpt;
    double tau_hi = -1.0, tau_lo = -1.0;
    int min_len = 5;
    std::string out;
    double weight = -1.0;
};

int cmd_segment(const SegmentArgs& a, std::ostream& out) {
    const Dataset data = load_any(a.data, "");
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return data[x].timestamp.value_or(0) < data[y].timestamp.value_or(0);
    });
    const Dataset seq = data.subset(order);
    std::vector<PressureFrame> frames;
    for (const auto& s : seq.samples()) frames.push_back(s.frame);

    const auto g = ts::temporal_gradient(frames);
    const auto defaults = ts::default_thresholds(g);
    const double hi = a.tau_hi > 0.0 ? a.tau_hi : defaults.tau_hi;
    const double lo = a.tau_lo > 0.0 ? a.tau_lo : defaults.tau_lo;
    const auto segments = ts::segment_frames(g, hi, lo, a.min_len);

    // Without a checkpoint the frame sum stands in for the prediction (1 unit
    // = 1 kg on generator output).
    std::vector<double> preds;
    if (!a.ckpt.empty()) {
        auto ck = train::load_checkpoint(a.ckpt);
        preds = train::predict(ck.model, ck.input, seq);
    } else {
        for (const auto& f : frames) preds.push_back(f.sum());
    }
    const auto estimate = ts::aggregate_weight(preds, segments);
    std::optional<double> truth;
    if (a.weight > 0.0) truth = a.weight;
    const std::string report = ts::session_report_json(estimate, segments, truth);
    if (!a.out.empty()) write_text(a.out, report);
    else out << report << '\n';
    out << fmt::format("estimate_kg={:.4f} segments={} static_frames={} active_frames={}", estimate.estimate_kg,
                       segments.segments.size(), estimate.still.frames, estimate.active.frames)
        << '\n';
    return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Body weight estimation from pressure images", "massnet"};
    app.require_subcommand(1);

    std::string config, name, ckpt, data, format, json_out, frame, joints, axis;
    auto* train_cmd = app.add_subcommand("train", "train a model from an experiment config");
    train_cmd->add_option("--config", config, "experiment config (JSON)")->required();
    train_cmd->add_option("--name", name, "run name, overrides the config");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--ckpt", ckpt)->required();
    eval_cmd->add_option("--data", data)->required();
    eval_cmd->add_option("--format", format, "dataset format; detected when omitted");
    eval_cmd->add_option("--json", json_out, "also write the report as JSON");

    auto* predict_cmd = app.add_subcommand("predict", "predict the weight for one frame");
    predict_cmd->add_option("--ckpt", ckpt)->required();
    predict_cmd->add_option("--frame", frame, "frame CSV")->required();
    predict_cmd->add_option("--joints", joints, "joints JSON [[row, col], ...]");

    auto* ablate_cmd = app.add_subcommand("ablate", "run one ablation axis");
    ablate_cmd->add_option("--config", config)->required();
    ablate_cmd->add_option("--axis", axis, "branches | loss_variant | depth_scan | joint_noise")->required();
    ablate_cmd->add_option("--name", name);

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--n", sa.n, "number of samples");
    synth_cmd->add_option("--seed", sa.seed);
    synth_cmd->add_option("--out", sa.out)->required();
    synth_cmd->add_option("--samples-per-subject", sa.spp);
    synth_cmd->add_option("--weight-min", sa.weight_min);
    synth_cmd->add_option("--weight-max", sa.weight_max);
    synth_cmd->add_option("--saturation", sa.saturation, "cap at this quantile of frame peaks");
    synth_cmd->add_option("--noise", sa.noise, "noise sigma relative to the median peak");
    synth_cmd->add_option("--gain", sa.gain, "per-cell gain sigma");
    synth_cmd->add_flag("--no-joints", sa.no_joints);
    synth_cmd->add_flag("--dynamic", sa.dynamic, "emit one session with planted movements");
    synth_cmd->add_option("--frames", sa.frames);
    synth_cmd->add_option("--movements", sa.movements);
    synth_cmd->add_option("--movement-frames", sa.movement_frames);
    synth_cmd->add_option("--weight", sa.weight, "session body weight (kg)");

    SegmentArgs ga;
    auto* segment_cmd = app.add_subcommand("segment", "segment a frame sequence and aggregate the weight");
    segment_cmd->add_option("--data", ga.data)->required();
    segment_cmd->add_option("--ckpt", ga.ckpt, "model; the frame sum is used when omitted");
    segment_cmd->add_option("--tau-hi", ga.tau_hi);
    segment_cmd->add_option("--tau-lo", ga.tau_lo);
    segment_cmd->add_option("--min-len", ga.min_len);
    segment_cmd->add_option("--out", ga.out, "session report path");
    segment_cmd->add_option("--weight-kg", ga.weight, "true weight, for the report");

    if (!args.empty() && !args.front().starts_with('-') && app.get_subcommand_no_throw(args.front()) == nullptr) {
        err << "usage error: unknown command '" << args.front() << "'\n";
        return kExitUsage;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(config, name, out);
        if (*eval_cmd) return cmd_eval(ckpt, data, format, json_out, out);
        if (*predict_cmd) return cmd_predict(ckpt, frame, joints, out);
        if (*ablate_cmd) return cmd_ablate(config, name, axis, out);
        if (*synth_cmd) return cmd_synth(sa, out);
        if (*segment_cmd) return cmd_segment(ga, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    err << "usage error: no command given\n";
    return kExitUsage;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace massnet::cli
