#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "flq/core/csv.hpp"
#include "flq/core/errors.hpp"
#include "flq/core/rng.hpp"
#include "flq/lbm/lattice.hpp"

namespace flq::pipeline {

// Full study configuration. Defaults are the paper-scale regime; the desk
// profile in configs/desk.cfg overrides grid size and training budgets.
struct PipelineConfig {
    // simulation
    int grid_nx = 256;
    int grid_ny = 64;
    double cylinder_radius = 16.0;
    double cylinder_cx = -1.0; // < 0: nx / 4
    double cylinder_cy = -1.0; // < 0: ny / 2
    double reynolds = 500.0;
    double mach = 0.1;
    double inlet_velocity = -1.0; // < 0: mach * (1/sqrt(3))
    std::int64_t warmup_steps = 5000;
    std::int64_t snapshot_interval = 10;
    std::int64_t snapshot_count = 1999;

    // vq-vae
    int vqvae_epochs = 50;
    int vqvae_batch = 32;
    double vqvae_lr = 0.0005;
    double vqvae_beta = 0.2;
    int codebook_size = 128;
    int latent_dim = 7;
    int vqvae_hidden = 2048;

    // priors
    int qcbm_iters = 100;
    double qcbm_lr = 0.1;
    int qgan_epochs = 2;
    int qgan_batch = 32;
    double qgan_lr = 0.01;
    int lstm_epochs = 100;
    int lstm_batch = 32;
    double lstm_lr = 0.001;

    // evaluation
    std::int64_t sample_count = 0; // 0: match the reference count
    double tsne_perplexity = 100.0;
    int tsne_iters = 1000;

    // run
    std::uint64_t master_seed = 42;
    int workers = 0; // 0: hardware default
    std::string output_dir = "out";

    double resolved_inlet_velocity() const {
        return inlet_velocity >= 0.0 ? inlet_velocity : mach / std::sqrt(3.0);
    }
    double resolved_cx() const { return cylinder_cx >= 0.0 ? cylinder_cx : grid_nx / 4.0; }
    double resolved_cy() const { return cylinder_cy >= 0.0 ? cylinder_cy : grid_ny / 2.0; }
    double diameter() const { return 2.0 * cylinder_radius; }
    double tau() const {
        return lbm::tau_from_reynolds(resolved_inlet_velocity(), diameter(), reynolds);
    }

    lbm::LatticeConfig lattice_config() const {
        lbm::LatticeConfig lc;
        lc.nx = grid_nx;
        lc.ny = grid_ny;
        lc.tau = tau();
        lc.u_inlet = resolved_inlet_velocity();
        lc.reynolds = reynolds;
        lc.diameter = diameter();
        lc.obstacle = lbm::make_cylinder_mask(grid_nx, grid_ny, resolved_cx(), resolved_cy(),
                                              cylinder_radius);
        return lc;
    }

    void validate() const {
        if (grid_nx < 32 || grid_ny < 32)
            throw ConfigError("config: grid must be at least 32 x 32");
        if (grid_nx % 16 != 0 || grid_ny % 16 != 0)
            throw ConfigError("config: grid extents must be divisible by 16");
        if (latent_dim != 7) throw ConfigError("config: latent_dim is fixed at 7");
        if (!(tau() > 0.5))
            throw ConfigError("config: derived tau " + std::to_string(tau()) +
                              " violates the BGK bound tau > 0.5");
        if (!(resolved_inlet_velocity() < 0.2))
            throw ConfigError("config: inlet velocity must stay below 0.2");
        if (snapshot_count < 1) throw ConfigError("config: snapshot_count must be >= 1");
        if (codebook_size < 1) throw ConfigError("config: codebook_size must be >= 1");
        if (vqvae_batch < 1 || qgan_batch < 1 || lstm_batch < 1)
            throw ConfigError("config: batch sizes must be >= 1");
        if (tsne_perplexity <= 1.0) throw ConfigError("config: tsne_perplexity must exceed 1");
    }

    std::map<std::string, std::string> resolved_map() const;
    std::uint64_t config_hash() const;
};

namespace detail {

template <typename T>
struct Key {
    const char* name;
    T PipelineConfig::* member;
};

inline const std::vector<Key<int>>& int_keys() {
    static const std::vector<Key<int>> keys = {
        {"grid_nx", &PipelineConfig::grid_nx},
        {"grid_ny", &PipelineConfig::grid_ny},
        {"vqvae_epochs", &PipelineConfig::vqvae_epochs},
        {"vqvae_batch", &PipelineConfig::vqvae_batch},
        {"codebook_size", &PipelineConfig::codebook_size},
        {"latent_dim", &PipelineConfig::latent_dim},
        {"vqvae_hidden", &PipelineConfig::vqvae_hidden},
        {"qcbm_iters", &PipelineConfig::qcbm_iters},
        {"qgan_epochs", &PipelineConfig::qgan_epochs},
        {"qgan_batch", &PipelineConfig::qgan_batch},
        {"lstm_epochs", &PipelineConfig::lstm_epochs},
        {"lstm_batch", &PipelineConfig::lstm_batch},
        {"tsne_iters", &PipelineConfig::tsne_iters},
        {"workers", &PipelineConfig::workers},
    };
    return keys;
}

inline const std::vector<Key<double>>& double_keys() {
    static const std::vector<Key<double>> keys = {
        {"cylinder_radius", &PipelineConfig::cylinder_radius},
        {"cylinder_cx", &PipelineConfig::cylinder_cx},
        {"cylinder_cy", &PipelineConfig::cylinder_cy},
        {"reynolds", &PipelineConfig::reynolds},
        {"mach", &PipelineConfig::mach},
        {"inlet_velocity", &PipelineConfig::inlet_velocity},
        {"vqvae_lr", &PipelineConfig::vqvae_lr},
        {"vqvae_beta", &PipelineConfig::vqvae_beta},
        {"qcbm_lr", &PipelineConfig::qcbm_lr},
        {"qgan_lr", &PipelineConfig::qgan_lr},
        {"lstm_lr", &PipelineConfig::lstm_lr},
        {"tsne_perplexity", &PipelineConfig::tsne_perplexity},
    };
    return keys;
}

inline const std::vector<Key<std::int64_t>>& i64_keys() {
    static const std::vector<Key<std::int64_t>> keys = {
        {"warmup_steps", &PipelineConfig::warmup_steps},
        {"snapshot_interval", &PipelineConfig::snapshot_interval},
        {"snapshot_count", &PipelineConfig::snapshot_count},
        {"sample_count", &PipelineConfig::sample_count},
    };
    return keys;
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

} // namespace detail

// Applies one "key = value" assignment; throws ConfigError on unknown keys or
// unparseable values.
inline void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                               const std::string& value) {
    auto parse_ll = [&](const std::string& v) {
        try {
            std::size_t used = 0;
            const long long x = std::stoll(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
        }
    };
    auto parse_d = [&](const std::string& v) {
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
        }
    };
    for (const auto& k : detail::int_keys())
        if (key == k.name) {
            cfg.*(k.member) = int(parse_ll(value));
            return;
        }
    for (const auto& k : detail::i64_keys())
        if (key == k.name) {
            cfg.*(k.member) = parse_ll(value);
            return;
        }
    for (const auto& k : detail::double_keys())
        if (key == k.name) {
            cfg.*(k.member) = parse_d(value);
            return;
        }
    if (key == "master_seed") {
        cfg.master_seed = std::uint64_t(parse_ll(value));
        return;
    }
    if (key == "output_dir") {
        cfg.output_dir = value;
        return;
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

// Key-value text file: one "key = value" per line, '#' comments. Overrides
// (from CLI flags) are applied after the file, then invariants are checked.
inline PipelineConfig load_config(const std::string& path,
                                  const std::vector<std::pair<std::string, std::string>>&
                                      overrides = {}) {
    PipelineConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string t = detail::trim(line);
            if (t.empty() || t[0] == '#') continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: malformed line " + std::to_string(line_no) + " in " +
                                  path + " (expected key = value)");
            const std::string key = detail::trim(t.substr(0, eq));
            const std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config: malformed line " + std::to_string(line_no) + " in " +
                                  path + " (empty key)");
            apply_config_entry(cfg, key, value);
        }
    }
    for (const auto& [k, v] : overrides) apply_config_entry(cfg, k, v);
    cfg.validate();
    return cfg;
}

inline std::map<std::string, std::string> PipelineConfig::resolved_map() const {
    std::map<std::string, std::string> m;
    for (const auto& k : detail::int_keys()) m[k.name] = std::to_string(this->*(k.member));
    for (const auto& k : detail::i64_keys()) m[k.name] = std::to_string(this->*(k.member));
    for (const auto& k : detail::double_keys()) m[k.name] = format_double(this->*(k.member));
    m["master_seed"] = std::to_string(master_seed);
    m["output_dir"] = output_dir;
    m["derived.tau"] = format_double(tau());
    m["derived.inlet_velocity"] = format_double(resolved_inlet_velocity());
    return m;
}

inline std::uint64_t PipelineConfig::config_hash() const {
    std::string blob;
    for (const auto& [k, v] : resolved_map()) blob += k + "=" + v + ";";
    return fnv1a64(blob);
}

} // namespace flq::pipeline
