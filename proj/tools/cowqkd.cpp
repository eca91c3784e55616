// Operator front end: key-rate evaluation, curve emission, parameter search,
// networked endpoints and the one-time-pad transfer demo.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cowqkd/counts_io.hpp"
#include "cowqkd/fixtures.hpp"
#include "cowqkd/io_json.hpp"
#include "cowqkd/optimize.hpp"
#include "cowqkd/session.hpp"
#include "cowqkd/toeplitz.hpp"
#include "cowqkd/transport.hpp"

using namespace cowqkd;

namespace {

// Exit-code contract: 0 ok, 1 usage/schema, 2 zero key, 3 protocol abort, 4 I/O.
enum ExitCode : int { kOk = 0, kUsage = 1, kZeroKey = 2, kAbort = 3, kIo = 4 };

io::RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return io::RunConfig{};
    return io::load_run_config(path);
}

int cmd_keyrate(const std::string& counts_path, const std::string& config_path,
                bool refined, std::optional<double> leak_bits) {
    io::RunConfig cfg;
    channel::CountsRecord counts;
    try {
        cfg = load_config_or_default(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    }
    try {
        counts = channel::load_counts(counts_path);
    } catch (const std::invalid_argument& e) {
        std::cerr << "counts error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "counts error: " << e.what() << "\n";
        return kIo;
    }

    fk::PipelineOptions opt = cfg.pipeline;
    if (refined) opt.refined = true;
    if (leak_bits) {
        opt.leak_mode = fk::LeakMode::measured;
        opt.leak_bits = *leak_bits;
    }
    auto rep = fk::evaluate_pipeline(counts, cfg.security, opt);

    auto j = io::report_to_json(rep);
    if (const auto* fx = io::match_fixture(counts))
        j["reconciliation"] = io::reconciliation_json(rep, *fx, opt.refined);
    std::cout << j.dump(2) << "\n";
    std::fprintf(stderr, "l = %llu bits, Ep_bar = %.6f, rate = %.4g bps\n",
                 static_cast<unsigned long long>(rep.l), rep.phase.Ep_bar, rep.rate_bps);
    return rep.l > 0 ? kOk : kZeroKey;
}

int cmd_curve(const std::string& distances_csv, const std::string& config_path,
              const std::string& out_path, double n_pulses) {
    io::RunConfig cfg;
    try {
        cfg = load_config_or_default(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    }
    std::vector<double> distances;
    std::string tok;
    std::stringstream ss(distances_csv);
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            distances.push_back(std::stod(tok));
        } catch (...) {
            std::cerr << "bad distance: " << tok << "\n";
            return kUsage;
        }
    }
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) {
        std::cerr << "cannot open " << out_path << "\n";
        return kIo;
    }
    // simulated_rate_bps: model phase error fed through the key-length bound;
    // bound_rate_bps: monitoring-state pipeline on the same expected counts;
    // measured columns: published rates of the bundled record, when one exists.
    out << "distance_km,simulated_rate_bps,bound_rate_bps,measured_rate_bps,"
           "measured_refined_rate_bps\n";
    for (double d : distances) {
        opt::OptimizationProblem prob;
        prob.channel = cfg.channel;
        prob.channel.distance_km = d;
        prob.n_pulses = n_pulses;
        prob.security = cfg.security;
        prob.f_ec = cfg.pipeline.f_ec;
        prob.repetition_hz = cfg.protocol.repetition_hz;
        prob.mode = opt::ObjectiveMode::simulated_direct;
        ProtocolParams pr = cfg.protocol;
        const double sim = opt::objective_rate(prob, pr);
        prob.mode = opt::ObjectiveMode::bound_pipeline;
        prob.form = cfg.pipeline.form;
        const double bound = opt::objective_rate(prob, pr);
        const auto* fx = fixtures::by_distance(d);
        out << d << ',' << sim << ',' << bound << ',';
        if (fx) out << fx->rate_bps << ',' << fx->rate_refined_bps;
        else out << ',';
        out << '\n';
    }
    std::cerr << "wrote " << out_path << "\n";
    return kOk;
}

int cmd_optimize(const std::string& config_path, std::uint64_t budget,
                 const std::string& trace_path, const std::string& mode, double n_pulses,
                 std::uint64_t seed) {
    io::RunConfig cfg;
    try {
        cfg = load_config_or_default(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    }
    opt::OptimizationProblem prob;
    prob.channel = cfg.channel;
    prob.n_pulses = n_pulses;
    prob.security = cfg.security;
    prob.form = cfg.pipeline.form;
    prob.f_ec = cfg.pipeline.f_ec;
    prob.repetition_hz = cfg.protocol.repetition_hz;
    if (mode == "simulated") prob.mode = opt::ObjectiveMode::simulated_direct;
    else if (mode == "bound") prob.mode = opt::ObjectiveMode::bound_pipeline;
    else {
        std::cerr << "mode must be bound|simulated\n";
        return kUsage;
    }
    auto res = opt::optimize(prob, budget, seed);
    if (!trace_path.empty()) {
        std::ofstream tr(trace_path, std::ios::trunc);
        if (!tr) {
            std::cerr << "cannot open " << trace_path << "\n";
            return kIo;
        }
        tr << "mu,p_0,p_alpha_alpha,z_split,rate_bps\n";
        for (const auto& t : res.trace)
            tr << t.mu << ',' << t.p_0 << ',' << t.p_aa << ',' << t.z_split << ','
               << t.rate_bps << '\n';
    }
    nlohmann::ordered_json j;
    j["best"] = {{"mu", res.best.mu},
                 {"p_0", res.best.p_0},
                 {"p_alpha_alpha", res.best.p_alpha_alpha},
                 {"p_z", res.best.p_z},
                 {"z_split", res.best.z_split}};
    j["best_rate_bps"] = res.best_rate;
    j["evaluations"] = res.evaluations;
    std::cout << j.dump(2) << "\n";
    return kOk;
}

void write_key_file_0600(const std::string& path, const BitVec& key) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
    if (fd < 0) throw std::runtime_error("cannot create " + path);
    std::string hex;
    hex.reserve(key.size() / 4 + 16);
    for (std::size_t i = 0; i < key.size(); i += 4) {
        int v = 0;
        for (std::size_t j = i; j < std::min(i + 4, key.size()); ++j)
            v = v << 1 | (key[j] ? 1 : 0);
        hex += "0123456789abcdef"[v];
    }
    hex += '\n';
    std::size_t off = 0;
    while (off < hex.size()) {
        const ssize_t w = ::write(fd, hex.data() + off, hex.size() - off);
        if (w <= 0) {
            ::close(fd);
            throw std::runtime_error("write failed: " + path);
        }
        off += static_cast<std::size_t>(w);
    }
    ::close(fd);
}

int cmd_endpoint(session::Role role, const std::string& listen, const std::string& connect,
                 const std::string& config_path, std::uint64_t seed, std::uint64_t n_pulses,
                 const std::string& send_file, const std::string& recv_file,
                 const std::string& key_out) {
    io::RunConfig cfg;
    try {
        cfg = load_config_or_default(config_path);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    }
    session::SessionConfig sc;
    sc.role = role;
    sc.protocol = cfg.protocol;
    sc.channel_params = cfg.channel;
    sc.security = cfg.security;
    sc.pipeline = cfg.pipeline;
    sc.cascade_cfg = cfg.cascade_cfg;
    sc.key_policy = cfg.key_policy;
    sc.n_pulses = n_pulses;
    sc.channel_seed = seed;
    sc.protocol_seed = seed ^ (role == session::Role::alice ? 0xa11ceULL : 0xb0bULL);
    sc.otp_send_path = send_file;
    sc.otp_recv_path = recv_file;

    std::unique_ptr<wire::ByteStream> stream;
    try {
        if (!listen.empty()) {
            wire::TcpListener listener(static_cast<std::uint16_t>(std::stoi(listen)));
            std::cerr << "listening on port " << listener.port() << "\n";
            stream = listener.accept();
        } else {
            const auto colon = connect.rfind(':');
            if (colon == std::string::npos) {
                std::cerr << "--connect needs HOST:PORT\n";
                return kUsage;
            }
            stream = wire::TcpStream::connect(
                connect.substr(0, colon),
                static_cast<std::uint16_t>(std::stoi(connect.substr(colon + 1))));
        }
    } catch (const std::exception& e) {
        std::cerr << "connection error: " << e.what() << "\n";
        return kIo;
    }

    auto rep = session::run_session(*stream, sc);
    stream->close();

    nlohmann::ordered_json j;
    j["success"] = rep.success;
    j["abort_reason"] = session::to_string(rep.abort_reason);
    j["abort_message"] = rep.abort_message;
    j["l"] = rep.l;
    j["n_sifted"] = rep.n_sifted;
    j["e_estimate"] = rep.e_estimate;
    j["disclosed_bits"] = rep.disclosed_bits;
    j["transcript_frames"] = rep.transcript.size();
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(rep.transcript_hash));
    j["transcript_hash"] = hash_hex;
    j["warnings"] = rep.warnings;
    j["otp_transferred"] = rep.otp_transferred;
    if (rep.fk_report) j["finite_key"] = io::report_to_json(*rep.fk_report);
    std::cout << j.dump(2) << "\n";

    if (!rep.success) return kAbort;
    if (rep.l == 0) return kZeroKey;
    if (!key_out.empty()) {
        try {
            write_key_file_0600(key_out, rep.final_key);
        } catch (const std::exception& e) {
            std::cerr << "key output error: " << e.what() << "\n";
            return kIo;
        }
    }
    return kOk;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](const char* name, bool ok, const std::string& detail) {
        std::printf("%-44s %s  %s\n", name, ok ? "PASS" : "FAIL", detail.c_str());
        if (!ok) ++failures;
    };
    {
        const double h = binary_entropy(0.25);
        char d[96];
        std::snprintf(d, sizeof(d), "expected 0.811278 got %.6f", h);
        check("entropy h(1/4)", std::abs(h - 0.811278124459133) < 1e-9, d);
        check("entropy endpoints", binary_entropy(0.0) == 0.0 && binary_entropy(1.0) == 0.0,
              "h(0)=h(1)=0");
        const auto np = n_plus_minus(2.43e-4);
        std::snprintf(d, sizeof(d), "expected 4.85941e-4 got %.6e", np.minus);
        check("norm factor N-", std::abs(np.minus - 4.85940955782678e-4) < 1e-12, d);
    }
    {
        const auto& fx = fixtures::km100();
        char d[96];
        std::snprintf(d, sizeof(d), "n_z=%llu mu=%.3g",
                      static_cast<unsigned long long>(fx.counts.n_z), fx.counts.mu);
        check("bundled 100 km record", fx.counts.n_z == 1077297 && fx.counts.n_aa_d1 == 190418,
              d);
        auto refined = fk::refine_counts(fixtures::km100().counts);
        std::snprintf(d, sizeof(d), "expected 493+-1 got %llu",
                      static_cast<unsigned long long>(refined.n_00_d1));
        check("refined vacuum counts (100 km)",
              std::llabs(static_cast<long long>(refined.n_00_d1) - 493) <= 1, d);
    }
    {
        pa::ToeplitzSpec spec;
        spec.m = 2;
        spec.n = 3;
        spec.seed = BitVec::from_bools({1, 0, 1, 1});
        const BitVec key = BitVec::from_bools({1, 1, 0});
        auto direct = pa::toeplitz_direct(spec, key);
        auto fft = pa::toeplitz_fft(spec, key);
        char d[96];
        std::snprintf(d, sizeof(d), "direct=[%d,%d] fft=[%d,%d]", int(direct[0]),
                      int(direct[1]), int(fft[0]), int(fft[1]));
        check("toeplitz reference vector", !direct[0] && direct[1] && direct == fft, d);
        Xoshiro256 rng(7);
        bool equal = true;
        for (int t = 0; t < 20 && equal; ++t) {
            const std::size_t n = 1 + rng.below(2048);
            const std::size_t m = 1 + rng.below(n);
            auto s = pa::ToeplitzSpec::random(n, m, rng);
            BitVec v(n);
            for (std::size_t i = 0; i < n; ++i) v.set(i, rng.next() & 1);
            equal = pa::toeplitz_direct(s, v) == pa::toeplitz_fft(s, v);
        }
        check("toeplitz transform equivalence", equal, "20 random instances");
    }
    {
        auto f = wire::encode_frame(wire::Tag::hello, {});
        const bool ok = f.size() == 5 && f[0] == 0 && f[1] == 0 && f[2] == 0 && f[3] == 0 &&
                        f[4] == 0x01;
        check("wire framing", ok, "empty HELLO = 00 00 00 00 01");
        const double gap = quantum::density_mixture_gap(2.43e-4);
        char d[64];
        std::snprintf(d, sizeof(d), "gap=%.2e", gap);
        check("basis density identity", gap < 1e-12, d);
    }
    std::printf("%s\n", failures ? "SELFTEST FAILED" : "selftest ok");
    return failures ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coherent one-way QKD engine"};
    app.require_subcommand(1);

    std::string counts_path, config_path, out_path, distances = "25,50,75,100";
    std::string listen, connect, send_file, recv_file, key_out, mode = "bound";
    bool refined = false;
    double leak_bits = -1;
    double pulses = 1e12;
    std::uint64_t budget = 1500, seed = 1;

    auto* keyrate = app.add_subcommand("keyrate", "finite-key length and rate from a counts file");
    keyrate->add_option("--counts", counts_path, "counts record (JSON)")->required();
    keyrate->add_option("--config", config_path, "run configuration (JSON)");
    keyrate->add_flag("--refined", refined, "use refined vacuum counts");
    keyrate->add_option("--leak-bits", leak_bits, "measured reconciliation leakage (bits)");

    auto* curve = app.add_subcommand("curve", "rate-vs-distance CSV");
    curve->add_option("--distances", distances, "comma-separated distances (km)");
    curve->add_option("--config", config_path, "run configuration (JSON)");
    curve->add_option("--out", out_path, "output CSV path")->required();
    curve->add_option("--pulses", pulses, "pulse budget per point");

    auto* optimize = app.add_subcommand("optimize", "search source parameters for a channel");
    optimize->add_option("--config", config_path, "run configuration (JSON)");
    optimize->add_option("--budget", budget, "evaluation budget");
    optimize->add_option("--trace", out_path, "write the evaluation trace CSV here");
    optimize->add_option("--mode", mode, "objective: bound|simulated");
    optimize->add_option("--pulses", pulses, "pulse budget");
    optimize->add_option("--seed", seed, "trace label seed");

    auto* alice = app.add_subcommand("alice", "run the sender endpoint");
    auto* bob = app.add_subcommand("bob", "run the receiver endpoint");
    for (auto* ep : {alice, bob}) {
        ep->add_option("--listen", listen, "listen on TCP port");
        ep->add_option("--connect", connect, "connect to HOST:PORT");
        ep->add_option("--config", config_path, "run configuration (JSON)");
        ep->add_option("--seed", seed, "shared channel seed");
        ep->add_option("--pulses", pulses, "emitted pulse count");
        ep->add_option("--key-out", key_out, "write the final key here (mode 0600)");
    }
    alice->add_option("--send", send_file, "one-time-pad encrypt and transfer this file");
    bob->add_option("--recv", recv_file, "write the decrypted transfer here");

    app.add_subcommand("selftest", "fixture-based sanity checks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("keyrate"))
            return cmd_keyrate(counts_path, config_path, refined,
                               leak_bits >= 0 ? std::optional<double>(leak_bits)
                                              : std::nullopt);
        if (app.got_subcommand("curve"))
            return cmd_curve(distances, config_path, out_path, pulses);
        if (app.got_subcommand("optimize"))
            return cmd_optimize(config_path, budget, out_path, mode, pulses, seed);
        if (app.got_subcommand("alice"))
            return cmd_endpoint(session::Role::alice, listen, connect, config_path, seed,
                                static_cast<std::uint64_t>(pulses), send_file, recv_file,
                                key_out);
        if (app.got_subcommand("bob"))
            return cmd_endpoint(session::Role::bob, listen, connect, config_path, seed,
                                static_cast<std::uint64_t>(pulses), send_file, recv_file,
                                key_out);
        if (app.got_subcommand("selftest")) return cmd_selftest();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
    return kUsage;
}
