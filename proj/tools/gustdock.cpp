// Command-line front end: dataset generation, training, evaluation and the
// closed-loop docking experiments.

#include "gustdock/harness.hpp"
#include "gustdock/io.hpp"

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gustdock;

namespace {

struct Globals {
    std::string config = "default";
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
};

HarnessConfig resolve_config(const Globals& g) {
    HarnessConfig cfg = g.config == "default" ? HarnessConfig{} : load_config(g.config);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.train.seed = *g.seed;
    }
    cfg.validate();
    return cfg;
}

fs::path data_dir(const Globals& g, DatasetKind kind) { return fs::path(g.out_dir) / "data" / to_string(kind); }
fs::path default_model(const Globals& g) { return fs::path(g.out_dir) / "model" / "tcn.ckpt"; }
fs::path default_lut(const Globals& g) { return fs::path(g.out_dir) / "lut" / "hull.lut"; }

std::vector<Episode> load_or_fail(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.csv"))
        throw std::invalid_argument("no dataset at " + dir.string() + " (run gen-data first)");
    return read_dataset(dir);
}

TcnModel load_model_or_fail(const fs::path& file) {
    if (!fs::exists(file)) throw std::invalid_argument("no trained model at " + file.string() + " (run train first)");
    return load_checkpoint(file);
}

HullLut lut_for(const Globals& g, const HarnessConfig& cfg, const std::string& path) {
    const fs::path file = path.empty() ? default_lut(g) : fs::path(path);
    if (fs::exists(file)) {
        HullLut lut = HullLut::load(file);
        if (lut.zone().hull_half_length != cfg.zone.hull_half_length || lut.band() != cfg.ceth.d_band_rep)
            throw std::invalid_argument("LUT " + file.string() + " was built for a different zone or band");
        return lut;
    }
    return build_lut(cfg);
}

std::string short_num(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

std::string axis_row(const char* label, const std::array<double, 3>& v) {
    std::ostringstream s;
    s << std::left << std::setw(12) << label << std::scientific << std::setprecision(4);
    for (double x : v) s << "  " << std::setw(12) << x;
    return s.str();
}

int cmd_gen_data(const Globals& g, const std::string& kind) {
    const HarnessConfig cfg = resolve_config(g);
    std::vector<DatasetKind> kinds;
    if (kind == "all") kinds = {DatasetKind::training, DatasetKind::evaluation, DatasetKind::calm};
    else kinds = {dataset_kind_from_string(kind)};
    for (DatasetKind k : kinds) {
        const auto episodes = generate_dataset(k, cfg.counts, cfg.plant, cfg.seed);
        write_dataset(data_dir(g, k), k, episodes, cfg.plant);
        std::cout << to_string(k) << ": " << episodes.size() << " episodes -> " << data_dir(g, k).string() << '\n';
    }
    return 0;
}

int cmd_train(const Globals& g, std::optional<int> epochs, const std::string& data) {
    HarnessConfig cfg = resolve_config(g);
    if (epochs) cfg.train.epochs = *epochs;
    cfg.train.validate();
    const auto episodes = load_or_fail(data.empty() ? data_dir(g, DatasetKind::training) : fs::path(data));
    TcnModel model(TcnArchitecture::standard());
    init_he_normal(model, cfg.train.seed);
    const TrainResult r = train(std::move(model), episodes, cfg.train);
    const fs::path dir = fs::path(g.out_dir) / "model";
    fs::create_directories(dir);
    save_checkpoint(dir / "tcn.ckpt", r.model, cfg.train);
    write_loss_curve(dir / "loss_curve.csv", r.curve);
    std::cout << "windows: " << r.train_windows << " train, " << r.val_windows << " validation\n";
    std::cout << "best epoch " << r.best_epoch << " (val " << short_num(r.curve[static_cast<std::size_t>(r.best_epoch)].val)
              << ") -> " << (dir / "tcn.ckpt").string() << '\n';
    return 0;
}

int cmd_eval_tcn(const Globals& g, const std::string& model_path, const std::string& data) {
    const HarnessConfig cfg = resolve_config(g);
    const TcnModel model = load_model_or_fail(model_path.empty() ? default_model(g) : fs::path(model_path));
    const auto episodes = load_or_fail(data.empty() ? data_dir(g, DatasetKind::evaluation) : fs::path(data));
    const RollingMse cv = rolling_mse(VelocityModel::constant, episodes, nullptr, cfg.mpc.N, kSeqLen, cfg.episode.n_fade);
    const RollingMse tcn = rolling_mse(VelocityModel::tcn, episodes, &model, cfg.mpc.N, kSeqLen, cfg.episode.n_fade);
    const fs::path dir = fs::path(g.out_dir) / "eval";
    fs::create_directories(dir);
    std::ofstream out(dir / "romse.txt", std::ios::binary);
    out << "# gustdock rolling mse v1\n";
    std::cout << std::left << std::setw(12) << "RoMSE" << "  " << std::setw(12) << "x" << "  " << std::setw(12) << "y"
              << "  " << std::setw(12) << "z" << '\n';
    for (const auto& [v, cv_axes] : cv.by_v_max) {
        const auto& tcn_axes = tcn.by_v_max.at(v);
        std::cout << "v_max = " << short_num(v) << " m/s\n"
                  << axis_row("  constant", cv_axes) << '\n'
                  << axis_row("  tcn", tcn_axes) << '\n';
        for (int d = 0; d < 3; ++d) {
            const char axis = "xyz"[d];
            const auto i = static_cast<std::size_t>(d);
            out << "v_max." << fmt_double(v) << ".constant." << axis << " = " << fmt_double(cv_axes[i]) << '\n';
            out << "v_max." << fmt_double(v) << ".tcn." << axis << " = " << fmt_double(tcn_axes[i]) << '\n';
            out << "v_max." << fmt_double(v) << ".improvement_pct." << axis << " = "
                << fmt_double(100.0 * (1.0 - tcn_axes[i] / cv_axes[i])) << '\n';
        }
    }
    std::cout << "windows: " << tcn.windows << " -> " << (dir / "romse.txt").string() << '\n';
    return 0;
}

int cmd_precompute_lut(const Globals& g) {
    const HarnessConfig cfg = resolve_config(g);
    const HullLut lut = build_lut(cfg);
    fs::create_directories(default_lut(g).parent_path());
    lut.save(default_lut(g));
    const auto& d = lut.grid().dims;
    std::cout << "grid " << d[0] << " x " << d[1] << " x " << d[2] << " at h = " << short_num(cfg.lut_h) << " -> "
              << default_lut(g).string() << '\n';
    return 0;
}

struct RunInputs {
    HarnessConfig cfg;
    HullLut lut;
    std::optional<TcnModel> model;
    std::vector<Episode> episodes;
};

RunInputs load_run_inputs(const Globals& g, const std::vector<Scenario>& scenarios, const std::string& model_path,
                          const std::string& lut_path, const std::string& data) {
    RunInputs in;
    in.cfg = resolve_config(g);
    in.lut = lut_for(g, in.cfg, lut_path);
    bool need_model = false;
    for (const auto& s : scenarios) need_model = need_model || s.needs_forecast();
    if (need_model) in.model = load_model_or_fail(model_path.empty() ? default_model(g) : fs::path(model_path));
    in.episodes = load_or_fail(data.empty() ? data_dir(g, DatasetKind::evaluation) : fs::path(data));
    return in;
}

int cmd_run_episode(const Globals& g, const std::string& scenario_name, std::size_t index, const std::string& model_path,
                    const std::string& lut_path, const std::string& data) {
    const Scenario s = scenario_from_string(scenario_name);
    RunInputs in = load_run_inputs(g, {s}, model_path, lut_path, data);
    if (index >= in.episodes.size())
        throw std::invalid_argument("episode index " + std::to_string(index) + " out of range");
    std::optional<ForecastCache> cache;
    if (in.model) cache.emplace(*in.model, in.cfg.episode.forecast_steps, in.cfg.episode.n_fade);
    const EpisodeContext ctx{&in.cfg, &in.lut, in.model ? &*in.model : nullptr, cache ? &*cache : nullptr};
    std::vector<TraceRow> rows;
    const EpisodeResult r = run_episode(s, in.episodes[index], ctx, &rows);
    const fs::path dir = fs::path(g.out_dir) / "episodes";
    fs::create_directories(dir);
    char name[96];
    std::snprintf(name, sizeof name, "trace_%s_%04zu.csv", s.name().c_str(), index);
    write_trace(dir / name, rows);
    std::cout << s.name() << " episode " << index << ": " << to_string(r.end);
    if (r.duration) std::cout << " after " << short_num(*r.duration) << " s";
    std::cout << ", min clearance " << short_num(r.min_clearance) << " m -> " << (dir / name).string() << '\n';
    return 0;
}

int cmd_run_matrix(const Globals& g, const std::string& model_path, const std::string& lut_path,
                   const std::string& data) {
    const auto scenarios = all_scenarios();
    RunInputs in = load_run_inputs(g, scenarios, model_path, lut_path, data);
    std::optional<ForecastCache> cache;
    if (in.model) cache.emplace(*in.model, in.cfg.episode.forecast_steps, in.cfg.episode.n_fade);
    const EpisodeContext ctx{&in.cfg, &in.lut, in.model ? &*in.model : nullptr, cache ? &*cache : nullptr};
    const fs::path dir = fs::path(g.out_dir) / "matrix";
    const MatrixReport report = run_matrix(scenarios, in.episodes, ctx, dir / "traces");
    write_report(dir / "report.txt", report);
    write_episode_table(dir / "episodes.csv", report, in.episodes);
    write_report(std::cout, report);
    return 0;
}

// Re-renders a matrix run from its per-episode table.
int cmd_report(const Globals& g, const std::string& matrix_dir) {
    const fs::path dir = matrix_dir.empty() ? fs::path(g.out_dir) / "matrix" : fs::path(matrix_dir);
    std::ifstream in(dir / "episodes.csv");
    if (!in) throw std::invalid_argument("no episodes.csv in " + dir.string() + " (run run-matrix first)");
    std::string line;
    std::getline(in, line);
    std::vector<Scenario> order;
    std::map<std::string, std::vector<EpisodeResult>> runs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
        if (f.size() < 8) throw std::invalid_argument("malformed row in episodes.csv: " + line);
        const Scenario s = scenario_from_string(f[0]);
        if (!runs.count(f[0])) order.push_back(s);
        EpisodeResult r;
        r.success = f[3] == "1";
        r.collision = f[4] == "1";
        if (f[5] != "NA") r.duration = parse_double(f[5]);
        r.min_clearance = parse_double(f[6]);
        runs[f[0]].push_back(r);
    }
    MatrixReport report;
    for (const auto& s : order) report.rows.push_back(summarize(s, runs[s.name()]));

    std::ostringstream md;
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("NA");
        std::ostringstream o;
        o << std::fixed << std::setprecision(1) << *v;
        return o.str();
    };
    md << "| scenario | success [%] | collisions | mean / std [s] | min / max [s] |\n";
    md << "|---|---|---|---|---|\n";
    for (const auto& r : report.rows)
        md << "| " << r.scenario.name() << " | " << cell(r.success_pct) << " | " << r.collisions << " | "
           << cell(r.duration_mean) << " / " << cell(r.duration_std) << " | " << cell(r.duration_min) << " / "
           << cell(r.duration_max) << " |\n";
    std::ofstream(dir / "report.md", std::ios::binary) << md.str();
    std::cout << md.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
    // Training reallocates large activation buffers every batch; keep them on
    // the heap instead of fresh mappings.
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"Gust-aware UAV-to-blimp docking experiments"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "JSON config file, or 'default'");
    auto* seed_opt = app.add_option("--seed", seed, "Override the dataset, noise and training seeds");
    app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();

    std::string kind = "all", data, model_path, lut_path, scenario, matrix_dir;
    std::optional<int> epochs;
    std::size_t episode = 0;

    auto* gen = app.add_subcommand("gen-data", "Simulate the training, evaluation and calm datasets");
    gen->add_option("--kind", kind, "training | evaluation | calm | all")
        ->check(CLI::IsMember({"training", "evaluation", "calm", "all"}));
    auto* tr = app.add_subcommand("train", "Train the TCN on the training dataset");
    tr->add_option("--epochs", epochs, "Override the epoch count");
    tr->add_option("--data", data, "Dataset directory");
    auto* ev = app.add_subcommand("eval-tcn", "Rolling MSE of the TCN and constant-velocity forecasts");
    ev->add_option("--model", model_path, "Checkpoint");
    ev->add_option("--data", data, "Dataset directory");
    auto* lut = app.add_subcommand("precompute-lut", "Build and save the hull distance lookup table");
    auto* re = app.add_subcommand("run-episode", "One closed-loop docking run");
    re->add_option("--scenario", scenario, "e.g. active-tcn-safety_position")->required();
    re->add_option("--episode", episode, "Evaluation episode index");
    auto* rm = app.add_subcommand("run-matrix", "All eight scenarios on every evaluation episode");
    for (auto* c : {re, rm}) {
        c->add_option("--model", model_path, "Checkpoint");
        c->add_option("--lut", lut_path, "Lookup table (built on the fly if absent)");
        c->add_option("--data", data, "Dataset directory");
    }
    auto* dc = app.add_subcommand("dump-config", "Print the effective config as JSON");
    auto* rp = app.add_subcommand("report", "Render the matrix report from episodes.csv");
    rp->add_option("--matrix-dir", matrix_dir, "Directory written by run-matrix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (*seed_opt) g.seed = seed;

    try {
        if (*gen) return cmd_gen_data(g, kind);
        if (*tr) return cmd_train(g, epochs, data);
        if (*ev) return cmd_eval_tcn(g, model_path, data);
        if (*lut) return cmd_precompute_lut(g);
        if (*re) return cmd_run_episode(g, scenario, episode, model_path, lut_path, data);
        if (*rm) return cmd_run_matrix(g, model_path, lut_path, data);
        if (*rp) return cmd_report(g, matrix_dir);
        if (*dc) {
            std::cout << dump_config(resolve_config(g));
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
