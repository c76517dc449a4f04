#include "vvgcs/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "vvgcs/checks.hpp"

namespace vvgcs::cli {

namespace fs = std::filesystem;

const char* to_string(Command c) noexcept {
    switch (c) {
        case Command::Train: return "train";
        case Command::Sweep: return "sweep";
        case Command::Export: return "export";
        case Command::Check: return "check";
    }
    return "?";
}

namespace {

const std::vector<std::string> kBaselines{"qam64-hard2", "qam64"};

// An empty list element would otherwise convert silently to 0.
const CLI::Validator kNonEmpty(
    [](std::string& s) { return s.empty() ? std::string("empty list entry") : std::string(); }, "NONEMPTY");

void add_seed(CLI::App& app, RunConfig& c) {
    app.add_option("--seed", c.seed, "Root seed; every random stream derives from it");
}

void add_system_source(CLI::App& app, RunConfig& c) {
    auto* sys = app.add_option("--system", c.system_dir, "Trained run directory");
    auto* base = app.add_option("--baseline", c.baseline, "Built-in reference system")->check(CLI::IsMember(kBaselines));
    sys->excludes(base);
    app.add_option("--half-window", c.baseline_half_window, "V&V half window K of a baseline system");
}

void add_train_options(CLI::App& app, RunConfig& c, std::string& activation) {
    auto& t = c.train;
    app.add_option("--bits-per-symbol", t.bits_per_symbol, "Bits per symbol m");
    app.add_option("--batch-len", t.batch_len, "Symbols per training sequence");
    app.add_option("--batches", t.batches, "Number of training batches");
    app.add_option("--lr", t.lr, "Initial Adam learning rate");
    app.add_option("--lr-decay", t.lr_decay, "Learning-rate decay factor");
    app.add_option("--lr-decay-every", t.lr_decay_every, "Batches between learning-rate decays");
    app.add_option("--snr-db", t.snr_db, "Training SNR in dB");
    app.add_option("--linewidth-hz", t.linewidth_hz, "Training laser linewidth in Hz");
    app.add_option("--symbol-rate", t.symbol_rate_baud, "Symbol rate in baud");
    app.add_option("--mu", t.mu, "V&V power mu");
    app.add_option("--partitions", t.partitions, "Number of soft partition rings L (0: standard V&V)");
    app.add_option("--half-window", t.half_window, "V&V half window K");
    app.add_option("--smooth-radius", t.smooth_radius, "Smoothing radius for L > 0 (negative: K)");
    app.add_option("--activation", activation, "Partition activation")->check(CLI::IsMember({"sigmoid", "softplus"}));
    app.add_option("--hidden", t.hidden, "Hidden layer widths of the Rx network")->delimiter(',')->check(kNonEmpty);
    app.add_option("--init-perturb-std", t.init_perturb_std, "Std of the initial QAM perturbation");
    app.add_option("--clip-norm", t.clip_norm, "Global gradient norm clip");
    app.add_option("--train-constellation", t.train_constellation, "Update the constellation (false freezes it)");
    app.add_option("--init-constellation", c.init_constellation, "Initial constellation TSV");
    app.add_option("--init-partition", c.init_partition, "Initial partition TSV");
    app.add_option("--checkpoint-every", c.checkpoint_every, "Write a checkpoint every N batches (0: final only)");
    add_seed(app, c);
    app.add_option("--out", c.out, "Run directory")->required();
}

void add_sweep_options(CLI::App& app, RunConfig& c) {
    auto& g = c.grid;
    add_system_source(app, c);
    app.add_option("--snrs", g.snrs_db, "SNR grid in dB")->delimiter(',')->check(kNonEmpty);
    app.add_option("--linewidths", g.linewidths_hz, "Linewidth grid in Hz")->delimiter(',')->check(kNonEmpty);
    app.add_option("--reps", g.reps, "Repetitions per cell");
    app.add_option("--symbols", g.symbols_per_rep, "Symbols per repetition");
    app.add_option("--symbol-rate", g.symbol_rate_baud, "Symbol rate in baud");
    app.add_option("--workers", g.workers, "Worker threads");
    add_seed(app, c);
    app.add_option("--out", c.out, "Result file")->required();
}

void add_export_options(CLI::App& app, RunConfig& c) {
    add_system_source(app, c);
    app.add_option("--grid-cols", c.grid_cols, "Partition grid resolution per axis");
    app.add_option("--out", c.out, "Output directory")->required();
}

void add_check_options(CLI::App& app, RunConfig& c) {
    app.add_option("--filter", c.filter, "Run only checks whose name contains this text");
    app.add_option("--inject-fault", c.fault, "Negative control: deliberately break a component")
        ->check(CLI::IsMember({"none", "carg-sign"}));
}

std::string usage() {
    return "usage: vvgcs <train|sweep|export|check> [options]\n"
           "       vvgcs <command> --help for the options of a command\n";
}

}  // namespace

Parsed parse(const std::vector<std::string>& args) {
    Parsed p;
    if (args.empty()) throw UsageError("missing command\n" + usage());
    const std::string& cmd = args[0];
    if (cmd == "--help" || cmd == "-h") {
        p.help = true;
        p.help_text = usage();
        return p;
    }
    if (cmd == "train") p.command = Command::Train;
    else if (cmd == "sweep") p.command = Command::Sweep;
    else if (cmd == "export") p.command = Command::Export;
    else if (cmd == "check") p.command = Command::Check;
    else throw UsageError("unknown command '" + cmd + "'\n" + usage());

    CLI::App app("vvgcs " + cmd, "vvgcs " + cmd);
    app.option_defaults()->always_capture_default();
    app.allow_config_extras(CLI::config_extras_mode::error);
    app.set_config("--config", "", "Config file (key = value lines)");
    auto& c = p.config;
    std::string activation = cpe::to_string(c.train.activation);
    switch (p.command) {
        case Command::Train: add_train_options(app, c, activation); break;
        case Command::Sweep: add_sweep_options(app, c); break;
        case Command::Export: add_export_options(app, c); break;
        case Command::Check: add_check_options(app, c); break;
    }

    std::vector<std::string> rest(args.rbegin(), args.rend() - 1);  // CLI11 consumes from the back
    try {
        app.parse(rest);
    } catch (const CLI::CallForHelp&) {
        p.help = true;
        p.help_text = app.help();
        return p;
    } catch (const CLI::ParseError& e) {
        throw UsageError(std::string(e.what()) + "\n" + usage());
    }

    c.train.activation = cpe::activation_from_string(activation);
    c.train.seed = c.seed;
    c.grid.seed = c.seed;
    if (p.command == Command::Sweep) {
        if (c.grid.snrs_db.empty()) throw UsageError("--snrs must list at least one value");
        if (c.grid.linewidths_hz.empty()) throw UsageError("--linewidths must list at least one value");
    }
    if ((p.command == Command::Sweep || p.command == Command::Export) && c.system_dir.empty() && c.baseline.empty())
        throw UsageError("one of --system or --baseline is required");
    p.echo = app.config_to_str(true, false);
    return p;
}

// ---- commands ------------------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::string trained_id(const trainer::TrainConfig& t) {
    return "gcs-m" + std::to_string(t.bits_per_symbol) + "-mu" + std::to_string(t.mu) + "-L" +
           std::to_string(t.partitions);
}

sweep::System trained_system(const trainer::TrainReport& r) {
    return {trained_id(r.config), r.constellation, r.config.cpe_config(r.partition), r.net};
}

// Constellation, partition, Rx net and system description of a report.
std::vector<fs::path> write_checkpoint_dir(const trainer::TrainReport& r, const fs::path& dir, const std::string& echo,
                                           int grid_cols) {
    const auto sys = trained_system(r);
    sweep::save_system(sys, dir);
    write_text(dir / "config.ini", echo);
    std::vector<fs::path> files{dir / "config.ini", dir / "system.txt", dir / "constellation.tsv", dir / "rxnet.txt"};
    if (sys.cpe.variant == cpe::Variant::SoftPartition) {
        std::ofstream grid(dir / "partition_grid.tsv");
        cpe::write_partition_grid(grid, r.partition, r.config.activation, grid_cols);
        files.push_back(dir / "partition.tsv");
        files.push_back(dir / "partition_grid.tsv");
    }
    return files;
}

void write_loss(const fs::path& path, const std::vector<double>& loss) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "batch\tloss\n";
    for (std::size_t b = 0; b < loss.size(); ++b) os << b << '\t' << format_double(loss[b]) << '\n';
}

void write_train_manifest(const fs::path& path, const RunConfig& c, const std::string& id,
                          const std::vector<fs::path>& files) {
    nlohmann::ordered_json j;
    j["command"] = "train";
    j["system_id"] = id;
    j["seed"] = c.seed;
    j["streams"] = {"init", "init-net", "bits", "channel"};
    j["batches"] = c.train.batches;
    auto& hashes = j["artifacts"];
    hashes = nlohmann::ordered_json::object();
    for (const auto& f : files) hashes[f.filename().string()] = sweep::git_blob_hash(f);
    write_text(path, j.dump(2) + "\n");
}

void write_snapshot(const fs::path& path, const trainer::TrainError& e) {
    std::ofstream os(path);
    os << "# batch " << e.batch() << " seed " << e.seed() << '\n' << "index\tvalue\n";
    for (std::size_t i = 0; i < e.snapshot().size(); ++i) os << i << '\t' << format_double(e.snapshot()[i]) << '\n';
}

int cmd_train(const Parsed& p, std::ostream& out, std::ostream& err) {
    const auto& c = p.config;
    auto cfg = c.train;
    if (!c.init_constellation.empty()) cfg.init_constellation = import_tsv(c.init_constellation);
    if (!c.init_partition.empty()) {
        std::ifstream is(c.init_partition);
        if (!is) throw std::runtime_error("cannot read " + c.init_partition);
        cfg.init_partition = cpe::read_partition_tsv(is);
    }
    cfg.validate();
    const fs::path dir = c.out;
    fs::create_directories(dir);

    std::vector<fs::path> files;
    const auto on_checkpoint = [&](int done, const trainer::TrainReport& r) {
        if (done < cfg.batches) {
            char name[32];
            std::snprintf(name, sizeof name, "batch_%06d", done);
            const auto sub = dir / "checkpoints" / name;
            write_checkpoint_dir(r, sub, p.echo, c.grid_cols);
            write_loss(sub / "loss.tsv", r.loss);
        } else {
            files = write_checkpoint_dir(r, dir, p.echo, c.grid_cols);
        }
    };
    std::optional<trainer::TrainReport> report;
    try {
        report.emplace(trainer::train(cfg, on_checkpoint, c.checkpoint_every));
    } catch (const trainer::TrainError& e) {
        write_snapshot(dir / "failure_snapshot.tsv", e);
        err << "error: " << e.what() << "\n(parameter snapshot in " << (dir / "failure_snapshot.tsv").string()
            << ", batch seed " << e.seed() << ")\n";
        return 3;
    }
    write_loss(dir / "loss.tsv", report->loss);
    files.push_back(dir / "loss.tsv");
    write_train_manifest(dir / "manifest.json", c, trained_id(cfg), files);
    out << "trained " << trained_id(cfg) << " for " << cfg.batches << " batches";
    if (!report->loss.empty()) out << ", final loss " << report->loss.back();
    out << " in " << report->wall_seconds << " s\n";
    return 0;
}

sweep::System source_system(const RunConfig& c) {
    if (!c.baseline.empty()) {
        if (c.baseline == "qam64-hard2") return sweep::qam_hard_baseline(2, c.baseline_half_window);
        sweep::System s{"qam64", square_qam_gray(6), {}, std::nullopt};
        s.cpe.vv.half_window = c.baseline_half_window;
        return s;
    }
    return sweep::load_system(c.system_dir);
}

fs::path sibling(const fs::path& file, const std::string& suffix) {
    fs::path p = file;
    p += suffix;
    return p;
}

int cmd_sweep(const Parsed& p, std::ostream& out) {
    const auto& c = p.config;
    const auto sys = source_system(c);  // loads every artifact before simulating
    c.grid.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = sweep::run_sweep(sys, c.grid);
    const fs::path path = c.out;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    sweep::export_results(result, path);
    write_text(sibling(path, ".config.ini"), p.echo);
    sweep::write_manifest(sibling(path, ".manifest.json"), sys, c.grid, {path, sibling(path, ".config.ini")});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out << "swept " << sys.id << " over " << result.rows.size() << " cells in " << secs << " s\n";
    return 0;
}

int cmd_export(const Parsed& p, std::ostream& out) {
    const auto& c = p.config;
    const auto sys = source_system(c);
    const fs::path dir = c.out;
    fs::create_directories(dir);
    export_tsv(sys.constellation, dir / "constellation.tsv");
    if (sys.cpe.variant == cpe::Variant::SoftPartition) {
        std::ofstream os(dir / "partition_grid.tsv");
        cpe::write_partition_grid(os, sys.cpe.partition, sys.cpe.activation, c.grid_cols);
    }
    out << "exported " << sys.id << " to " << dir.string() << '\n';
    return 0;
}

int cmd_check(const Parsed& p, std::ostream& out, std::ostream& err) {
    const auto fault = checks::fault_from_string(p.config.fault);
    const auto outcomes = checks::run_checks(p.config.filter, fault, out);
    if (outcomes.empty()) {
        err << "error: no check matches filter '" << p.config.filter << "'\n";
        return 2;
    }
    std::vector<std::string> failed;
    for (const auto& o : outcomes)
        if (!o.passed) failed.push_back(o.name);
    if (failed.empty()) {
        out << outcomes.size() << " checks passed\n";
        return 0;
    }
    err << "failed checks:";
    for (const auto& f : failed) err << ' ' << f;
    err << '\n';
    return 1;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Parsed p;
    try {
        p = parse(args);
    } catch (const UsageError& e) {
        err << "error: " << e.what();
        return 2;
    }
    if (p.help) {
        out << p.help_text;
        return 0;
    }
    try {
        switch (p.command) {
            case Command::Train: return cmd_train(p, out, err);
            case Command::Sweep: return cmd_sweep(p, out);
            case Command::Export: return cmd_export(p, out);
            case Command::Check: return cmd_check(p, out, err);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace vvgcs::cli
