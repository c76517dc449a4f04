#include "vvgcs/sweep.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include "json.hpp"
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "vvgcs/channel.hpp"

namespace vvgcs::sweep {

namespace fs = std::filesystem;

void SweepGrid::validate() const {
    if (snrs_db.empty()) throw std::invalid_argument("sweep: SNR list is empty");
    if (linewidths_hz.empty()) throw std::invalid_argument("sweep: linewidth list is empty");
    if (reps < 2) throw std::invalid_argument("sweep: at least 2 repetitions are needed for a standard deviation");
    if (symbols_per_rep < 64) throw std::invalid_argument("sweep: too few symbols per repetition");
    if (workers < 1) throw std::invalid_argument("sweep: worker count must be >= 1");
    for (double lw : linewidths_hz)
        if (!(lw >= 0.0)) throw std::invalid_argument("sweep: linewidths must be >= 0");
}

System qam_hard_baseline(int rings, int half_window) {
    System s{"qam64-hard" + std::to_string(rings), square_qam_gray(6), {}, std::nullopt};
    s.cpe.variant = cpe::Variant::HardPartition;
    s.cpe.vv = {4, half_window};
    s.cpe.hard_rings = rings;
    s.cpe.bits_per_symbol = 6;
    return s;
}

// ---- system artifacts ----------------------------------------------------------

void save_system(const System& s, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "system.txt");
        if (!os) throw std::runtime_error("cannot write " + (dir / "system.txt").string());
        os << "id=" << s.id << '\n'
           << "variant=" << cpe::to_string(s.cpe.variant) << '\n'
           << "mu=" << s.cpe.vv.mu << '\n'
           << "half_window=" << s.cpe.vv.half_window << '\n'
           << "smooth_radius=" << s.cpe.smooth_radius << '\n'
           << "activation=" << cpe::to_string(s.cpe.activation) << '\n'
           << "hard_rings=" << s.cpe.hard_rings << '\n'
           << "bits_per_symbol=" << s.cpe.bits_per_symbol << '\n'
           << "demapper=" << (s.net ? "rxnet" : "exact") << '\n'
           << "llr_sign=positive_means_bit_1\n";
    }
    export_tsv(s.constellation, dir / "constellation.tsv");
    if (s.cpe.variant == cpe::Variant::SoftPartition) {
        std::ofstream os(dir / "partition.tsv");
        cpe::write_partition_tsv(os, s.cpe.partition);
    }
    if (s.net) demapper::save_checkpoint(*s.net, dir / "rxnet.txt");
}

namespace {

std::map<std::string, std::string> read_key_values(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing system file " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("system file lacks '" + key + "'");
    return it->second;
}

cpe::Variant variant_from_string(const std::string& v) {
    for (auto x : {cpe::Variant::Standard, cpe::Variant::SoftPartition, cpe::Variant::HardPartition})
        if (v == cpe::to_string(x)) return x;
    throw std::runtime_error("unknown CPE variant '" + v + "'");
}

}  // namespace

System load_system(const fs::path& dir) {
    const auto kv = read_key_values(dir / "system.txt");
    System s{require(kv, "id"), import_tsv(dir / "constellation.tsv"), {}, std::nullopt};
    s.cpe.variant = variant_from_string(require(kv, "variant"));
    s.cpe.vv = {std::stoi(require(kv, "mu")), std::stoi(require(kv, "half_window"))};
    s.cpe.vv.validate();
    s.cpe.smooth_radius = std::stoi(require(kv, "smooth_radius"));
    s.cpe.activation = cpe::activation_from_string(require(kv, "activation"));
    s.cpe.hard_rings = std::stoi(require(kv, "hard_rings"));
    s.cpe.bits_per_symbol = std::stoi(require(kv, "bits_per_symbol"));
    if (s.cpe.variant == cpe::Variant::SoftPartition) {
        std::ifstream is(dir / "partition.tsv");
        if (!is) throw std::runtime_error("missing partition file " + (dir / "partition.tsv").string());
        s.cpe.partition = cpe::read_partition_tsv(is);
    }
    const auto& dm = require(kv, "demapper");
    if (dm == "rxnet") {
        if (!fs::exists(dir / "rxnet.txt")) throw std::runtime_error("missing Rx network " + (dir / "rxnet.txt").string());
        s.net = demapper::load_checkpoint(dir / "rxnet.txt");
        if (s.net->output_bits() != s.constellation.bits_per_symbol())
            throw std::runtime_error("Rx network output size does not match the constellation");
    } else if (dm != "exact") {
        throw std::runtime_error("unknown demapper '" + dm + "'");
    }
    return s;
}

// ---- simulation --------------------------------------------------------------

std::uint64_t repetition_seed(const SweepGrid& g, double snr_db, double linewidth_hz, int rep) {
    return stream_id({g.seed, hash_name("cell"), std::bit_cast<std::uint64_t>(snr_db),
                      std::bit_cast<std::uint64_t>(linewidth_hz),
                      static_cast<std::uint64_t>(g.equal_rep_seeds ? 0 : rep)});
}

double run_repetition(const System& s, double snr_db, double linewidth_hz, double symbol_rate_baud,
                      std::size_t symbols, std::uint64_t seed) {
    const int m = s.constellation.bits_per_symbol();
    auto rng = make_stream(seed, {hash_name("bits")});
    std::uniform_int_distribution<std::uint32_t> label(0, static_cast<std::uint32_t>(s.constellation.size() - 1));
    std::vector<std::uint32_t> labels(symbols);
    for (auto& l : labels) l = label(rng);
    const auto points = s.constellation.as_pairs();
    const auto x = map_labels<double>(points, labels);

    const channel::ChannelParams cp{snr_db, linewidth_hz, symbol_rate_baud, seed, std::nullopt};
    const auto realization = channel::realize(cp, symbols);
    const auto z = channel::apply<double>(x, realization);

    const auto track = cpe::estimate(z, s.cpe);
    const double bias = cpe::phase_bias(s.constellation, s.cpe);
    std::vector<double> reference(symbols);
    for (std::size_t k = 0; k < symbols; ++k) reference[k] = realization.phase[k] + bias;
    const auto corrected = cpe::genie_csc(track.est, reference, s.cpe.vv.mu);
    const auto y = cpe::derotate<double>(z, corrected);

    demapper::BitBatch batch;
    batch.bits_per_symbol = m;
    batch.bits = demapper::label_bits(labels, m);
    if (s.net) {
        batch.llrs = s.net->forward(y);
    } else {
        std::vector<CplxD> seen(points.size());
        const CplxD rot = cexp_j(-bias);
        for (std::size_t i = 0; i < points.size(); ++i) seen[i] = cmul(points[i], rot);
        batch.llrs = demapper::exact_llrs(y, seen, m, channel::noise_variance(snr_db));
    }
    return demapper::bmi(batch);
}

SweepResult run_sweep(const System& s, const SweepGrid& grid) {
    grid.validate();
    struct Cell {
        double snr;
        double lw;
    };
    std::vector<Cell> cells;
    for (double snr : grid.snrs_db)
        for (double lw : grid.linewidths_hz) cells.push_back({snr, lw});

    std::vector<Row> rows(cells.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(cells.size());
    const auto worker = [&]() {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                std::vector<double> bmis;
                for (int r = 0; r < grid.reps; ++r) {
                    const auto seed = repetition_seed(grid, cells[i].snr, cells[i].lw, r);
                    bmis.push_back(run_repetition(s, cells[i].snr, cells[i].lw, grid.symbol_rate_baud,
                                                  grid.symbols_per_rep, seed));
                }
                double mean = 0.0;
                for (double b : bmis) mean += b;
                mean /= static_cast<double>(bmis.size());
                double var = 0.0;
                for (double b : bmis) var += (b - mean) * (b - mean);
                var /= static_cast<double>(bmis.size() - 1);
                rows[i] = {cells[i].snr, cells[i].lw, mean, std::sqrt(var), s.id};
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int nthreads = std::min<int>(grid.workers, static_cast<int>(cells.size()));
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return {std::move(rows)};
}

// ---- result files --------------------------------------------------------------

namespace {

std::string format_fixed(double v) {
    char buf[512];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
    return std::string(buf, res.ptr);
}

std::string format_snr(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

void write_results(std::ostream& os, const SweepResult& r) {
    os << "linewidth mean stddev snr\n";
    for (const auto& row : r.rows) {
        os << format_fixed(row.linewidth_hz) << ' ' << format_double(row.bmi_mean) << ' '
           << format_double(row.bmi_stddev) << ' ' << format_snr(row.snr_db) << '\n';
    }
}

SweepResult read_results(std::istream& is, const std::string& system_id) {
    std::string line;
    std::size_t lineno = 0;
    SweepResult r;
    bool header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<std::string> f;
        for (std::string x; ls >> x;) f.push_back(x);
        if (!header) {
            if (f != std::vector<std::string>{"linewidth", "mean", "stddev", "snr"})
                throw ParseError("expected header 'linewidth mean stddev snr'", lineno);
            header = true;
            continue;
        }
        if (f.size() != 4) throw ParseError("expected 4 columns", lineno);
        double v[4];
        for (int i = 0; i < 4; ++i) {
            const auto res = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v[i]);
            if (res.ec != std::errc{} || res.ptr != f[i].data() + f[i].size())
                throw ParseError("bad number '" + f[i] + "'", lineno);
        }
        r.rows.push_back({v[3], v[0], v[1], v[2], system_id});
    }
    if (!header) throw ParseError("empty result file", lineno);
    return r;
}

void export_results(const SweepResult& r, const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    write_results(os, r);
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

SweepResult import_results(const fs::path& path, const std::string& system_id) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return read_results(is, system_id);
}

std::string git_blob_hash(const fs::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + file.string());
    const std::string content((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("SHA-1 context allocation failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, md, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

void write_manifest(const fs::path& path, const System& s, const SweepGrid& grid,
                    const std::vector<fs::path>& artifacts) {
    nlohmann::ordered_json j;
    j["system_id"] = s.id;
    j["cpe_variant"] = cpe::to_string(s.cpe.variant);
    j["mu"] = s.cpe.vv.mu;
    j["half_window"] = s.cpe.vv.half_window;
    j["activation"] = cpe::to_string(s.cpe.activation);
    j["demapper"] = s.net ? "rxnet" : "exact";
    j["llr_sign"] = "positive_means_bit_1";
    j["grid"] = {{"snrs_db", grid.snrs_db},
                 {"linewidths_hz", grid.linewidths_hz},
                 {"reps", grid.reps},
                 {"symbols_per_rep", grid.symbols_per_rep},
                 {"symbol_rate_baud", grid.symbol_rate_baud},
                 {"seed", grid.seed},
                 {"equal_rep_seeds", grid.equal_rep_seeds}};
    auto& hashes = j["artifacts"];
    hashes = nlohmann::ordered_json::object();
    for (const auto& a : artifacts) hashes[a.filename().string()] = git_blob_hash(a);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

}  // namespace vvgcs::sweep
