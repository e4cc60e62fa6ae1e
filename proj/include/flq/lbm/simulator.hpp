#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "flq/lbm/lattice.hpp"

namespace flq::lbm {

// One full update. Kernel order: inflow -> macroscopics -> equilibrium ->
// collide (fluid nodes) -> bounce-back (solid nodes) -> propagate ->
// zero-gradient outflow copy on the right boundary.
class Simulator {
public:
    explicit Simulator(LatticeConfig config)
        : cfg_(std::move(config)), f_(cfg_.nx, cfg_.ny), scratch_(cfg_.nx, cfg_.ny),
          macro_(cfg_.nx, cfg_.ny) {
        cfg_.validate();
        reset();
    }

    // Equilibrium at (rho=1, u=(u_inlet,0)) everywhere for quick shedding onset.
    void reset() {
        const auto feq = compute_equilibrium(1.0, cfg_.inflow ? cfg_.u_inlet : 0.0, 0.0);
        for (int i = 0; i < kQ; ++i) {
            double* p = f_.data.data() + i * f_.plane();
            for (std::size_t k = 0; k < f_.plane(); ++k) p[k] = feq[i];
        }
        step_index_ = 0;
    }

    void step() {
        const int nx = cfg_.nx, ny = cfg_.ny;
        if (cfg_.inflow) apply_inflow_inplace(f_, cfg_.u_inlet);
        compute_macroscopics_into(f_, &cfg_.obstacle, macro_, step_index_);

        const double inv_tau = 1.0 / cfg_.tau;
        const double gx = cfg_.body_force_x, gy = cfg_.body_force_y;
        const bool forced = gx != 0.0 || gy != 0.0;
        const std::size_t plane = f_.plane();
        parallel_for(std::size_t(ny), [&](std::size_t yb, std::size_t ye) {
            for (std::size_t y = yb; y < ye; ++y) {
                for (int x = 0; x < nx; ++x) {
                    const std::size_t base = y * nx + x;
                    if (cfg_.obstacle.solid[base]) continue;
                    const double rho = macro_.rho[base];
                    const double ux = macro_.ux[base];
                    const double uy = macro_.uy[base];
                    const double usq = 1.5 * (ux * ux + uy * uy);
                    for (int i = 0; i < kQ; ++i) {
                        const double eu = 3.0 * (kEx[i] * ux + kEy[i] * uy);
                        const double feq = kWeight[i] * rho * (1.0 + eu + 0.5 * eu * eu - usq);
                        double v = f_.data[i * plane + base];
                        v -= (v - feq) * inv_tau;
                        if (forced) v += 3.0 * kWeight[i] * (kEx[i] * gx + kEy[i] * gy);
                        f_.data[i * plane + base] = v;
                    }
                }
            }
        });

        bounce_back_inplace(f_, cfg_.obstacle);
        propagate_into(f_, scratch_);
        std::swap(f_.data, scratch_.data);

        if (cfg_.outflow) {
            for (int i = 0; i < kQ; ++i)
                for (int y = 0; y < ny; ++y) f_.at(i, nx - 1, y) = f_.at(i, nx - 2, y);
        }
        ++step_index_;
    }

    void run(std::int64_t steps) {
        for (std::int64_t s = 0; s < steps; ++s) step();
    }

    VorticitySnapshot vorticity_snapshot() {
        compute_macroscopics_into(f_, &cfg_.obstacle, macro_, step_index_);
        return compute_vorticity(macro_, cfg_.obstacle, step_index_);
    }

    const LatticeConfig& config() const { return cfg_; }
    const DistributionField& field() const { return f_; }
    DistributionField& field() { return f_; }
    const MacroscopicFields& macroscopics() const { return macro_; }
    std::int64_t step_index() const { return step_index_; }

private:
    LatticeConfig cfg_;
    DistributionField f_;
    DistributionField scratch_;
    MacroscopicFields macro_;
    std::int64_t step_index_ = 0;
};

// Free-function form of one update, for property tests over explicit fields.
inline DistributionField simulate_step(const DistributionField& f, const LatticeConfig& cfg) {
    if (f.nx != cfg.nx || f.ny != cfg.ny)
        throw ConfigError("simulate_step: field extent does not match config");
    Simulator sim(cfg);
    sim.field() = f;
    sim.step();
    return sim.field();
}

// Runs `warmup` steps, then records a snapshot every `interval` steps until
// `count` snapshots are collected (snapshot k is taken at warmup + k*interval).
inline std::vector<VorticitySnapshot> collect_snapshots(const LatticeConfig& cfg,
                                                        std::int64_t warmup,
                                                        std::int64_t interval,
                                                        std::int64_t count) {
    if (count < 1) throw ConfigError("collect_snapshots: count must be >= 1");
    if (interval < 1) throw ConfigError("collect_snapshots: interval must be >= 1");
    Simulator sim(cfg);
    std::vector<VorticitySnapshot> snaps;
    snaps.reserve(std::size_t(count));
    try {
        sim.run(warmup);
        snaps.push_back(sim.vorticity_snapshot());
        while (std::int64_t(snaps.size()) < count) {
            sim.run(interval);
            snaps.push_back(sim.vorticity_snapshot());
        }
    } catch (const NumericalError& e) {
        throw NumericalError("collect_snapshots: run aborted after " +
                                 std::to_string(snaps.size()) + " snapshots: " + e.what(),
                             e.step_index >= 0 ? e.step_index : sim.step_index());
    }
    return snaps;
}

} // namespace flq::lbm
