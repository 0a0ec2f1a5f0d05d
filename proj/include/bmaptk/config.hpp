#pragma once

#include <fstream>
#include <map>

#include "bmaptk/optimize.hpp"

namespace bmaptk {

// key = value text file; '#' starts a comment. Unknown keys are rejected so
// typos fail loudly.
inline std::map<std::string, std::string> parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("config: cannot open: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos)
            throw io_error("config: line " + std::to_string(lineno) + " has no '='");
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

struct Config {
    TissueTable table;
    opt::OptimConfig optim;
    opt::LossSpec lossspec;
    seq::PresetTiming timing;
    double pd_floor = default_pd_floor;
    double prune_eps_rel = 1e-6;
    sim::Mode mode = sim::Mode::intra_readout_decay;
};

inline Config load_config(const std::string& path) {
    Config cfg;
    auto kv = parse_config(path);
    auto num = [&](const std::string& key, double& dst) {
        if (auto it = kv.find(key); it != kv.end()) {
            dst = std::stod(it->second);
            kv.erase(it);
        }
    };
    auto tissue = [&](const std::string& prefix, TissueParams& p) {
        num(prefix + ".t1", p.t1);
        num(prefix + ".t2", p.t2);
        num(prefix + ".t2_prime", p.t2_prime);
        num(prefix + ".pd", p.pd);
        num(prefix + ".d", p.d);
    };
    tissue("tissue.csf", cfg.table.csf);
    tissue("tissue.gm", cfg.table.gm);
    tissue("tissue.wm", cfg.table.wm);

    double epochs = cfg.optim.epochs;
    num("optim.epochs", epochs);
    cfg.optim.epochs = int(epochs);
    num("optim.lr", cfg.optim.lr);
    num("optim.beta1", cfg.optim.beta1);
    num("optim.beta2", cfg.optim.beta2);
    num("optim.eps", cfg.optim.eps);
    double seed = double(cfg.optim.seed);
    num("optim.seed", seed);
    cfg.optim.seed = uint64_t(seed);
    double sgd = cfg.optim.plain_sgd ? 1 : 0;
    num("optim.plain_sgd", sgd);
    cfg.optim.plain_sgd = sgd != 0;

    if (auto it = kv.find("loss.domain"); it != kv.end()) {
        if (it->second == "image")
            cfg.lossspec.domain = opt::LossDomain::image;
        else if (it->second == "kspace")
            cfg.lossspec.domain = opt::LossDomain::kspace;
        else
            throw io_error("config: loss.domain must be image or kspace");
        kv.erase(it);
    }
    if (auto it = kv.find("sim.mode"); it != kv.end()) {
        if (it->second == "idealized")
            cfg.mode = sim::Mode::idealized;
        else if (it->second == "intra_readout_decay")
            cfg.mode = sim::Mode::intra_readout_decay;
        else
            throw io_error("config: sim.mode must be idealized or intra_readout_decay");
        kv.erase(it);
    }
    num("sim.pd_floor", cfg.pd_floor);
    num("sim.prune_eps_rel", cfg.prune_eps_rel);

    num("seq.flip", cfg.timing.flip);
    num("seq.tr", cfg.timing.tr);
    num("seq.ti_t1ir", cfg.timing.ti_t1ir);
    num("seq.t2prep_tau", cfg.timing.t2prep_tau);
    num("seq.dwi_b", cfg.timing.dwi_b);
    if (auto it = kv.find("seq.echo_times"); it != kv.end()) {
        cfg.timing.echo_times.clear();
        std::istringstream ss(it->second);
        double v;
        while (ss >> v) cfg.timing.echo_times.push_back(v);
        if (cfg.timing.echo_times.empty())
            throw io_error("config: seq.echo_times must list at least one value");
        kv.erase(it);
    }
    if (auto it = kv.find("loss.weights"); it != kv.end()) {
        cfg.lossspec.weights.clear();
        std::istringstream ss(it->second);
        double v;
        while (ss >> v) cfg.lossspec.weights.push_back(v);
        kv.erase(it);
    }
    if (!kv.empty()) throw io_error("config: unknown key '" + kv.begin()->first + "'");
    cfg.table.validate();
    return cfg;
}

} // namespace bmaptk
