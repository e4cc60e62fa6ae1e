#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "flq/core/errors.hpp"
#include "flq/core/parallel.hpp"
#include "flq/lbm/d2q9.hpp"

namespace flq::lbm {

struct ObstacleMask {
    int nx = 0;
    int ny = 0;
    std::vector<std::uint8_t> solid; // nx*ny, x fastest

    ObstacleMask() = default;
    ObstacleMask(int nx_, int ny_) : nx(nx_), ny(ny_), solid(std::size_t(nx_) * ny_, 0) {}

    bool is_solid(int x, int y) const { return solid[std::size_t(y) * nx + x] != 0; }
    void set_solid(int x, int y, bool v) { solid[std::size_t(y) * nx + x] = v ? 1 : 0; }
    bool any() const {
        for (auto s : solid)
            if (s) return true;
        return false;
    }
};

// Circular obstacle plus bounce-back walls on the top and bottom rows.
inline ObstacleMask make_cylinder_mask(int nx, int ny, double cx, double cy, double radius,
                                       bool walls = true) {
    ObstacleMask mask(nx, ny);
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            const double dx = x - cx;
            const double dy = y - cy;
            if (dx * dx + dy * dy < radius * radius) mask.set_solid(x, y, true);
        }
    }
    if (walls) {
        for (int x = 0; x < nx; ++x) {
            mask.set_solid(x, 0, true);
            mask.set_solid(x, ny - 1, true);
        }
    }
    return mask;
}

struct LatticeConfig {
    int nx = 0;
    int ny = 0;
    double tau = 0.0;       // BGK relaxation time
    double u_inlet = 0.0;   // inlet speed, lattice units
    double reynolds = 0.0;
    double diameter = 0.0;  // obstacle characteristic length, nodes
    ObstacleMask obstacle;
    double body_force_x = 0.0; // per-node forcing, used by channel benchmarks
    double body_force_y = 0.0;
    bool inflow = true;
    bool outflow = true;

    double viscosity() const { return (tau - 0.5) * kCs2; }

    void validate() const {
        if (nx < 3 || ny < 3) throw ConfigError("lattice: nx and ny must be >= 3");
        if (!(tau > 0.5)) throw ConfigError("lattice: tau must exceed 0.5 (BGK stability)");
        if (!(u_inlet < 0.2)) throw ConfigError("lattice: u_inlet must stay below 0.2");
        if (obstacle.nx != nx || obstacle.ny != ny)
            throw ConfigError("lattice: obstacle mask extent mismatch");
        if (reynolds > 0.0 && diameter > 0.0) {
            const double tau_derived = 3.0 * u_inlet * diameter / reynolds + 0.5;
            if (std::abs(tau_derived - tau) > 1e-9)
                throw ConfigError("lattice: tau inconsistent with Re, diameter, u_inlet "
                                  "(expected " + std::to_string(tau_derived) + ")");
        }
        if (inflow) {
            for (int y = 0; y < ny; ++y)
                if (obstacle.is_solid(0, y) && y != 0 && y != ny - 1)
                    throw ConfigError("lattice: obstacle intersects the inlet column");
        }
    }
};

// Relaxation time from the flow parameters: nu = u*D/Re, tau = 3*nu + 1/2.
inline double tau_from_reynolds(double u_inlet, double diameter, double reynolds) {
    return 3.0 * u_inlet * diameter / reynolds + 0.5;
}

struct DistributionField {
    int nx = 0;
    int ny = 0;
    std::vector<double> data; // kQ planes of nx*ny, x fastest within a plane

    DistributionField() = default;
    DistributionField(int nx_, int ny_)
        : nx(nx_), ny(ny_), data(std::size_t(kQ) * nx_ * ny_, 0.0) {}

    std::size_t plane() const { return std::size_t(nx) * ny; }
    double& at(int i, int x, int y) { return data[i * plane() + std::size_t(y) * nx + x]; }
    double at(int i, int x, int y) const { return data[i * plane() + std::size_t(y) * nx + x]; }

    // Fixed-order sum for conservation diagnostics.
    double total_mass() const {
        double s = 0.0;
        for (double v : data) s += v;
        return s;
    }
};

struct MacroscopicFields {
    int nx = 0;
    int ny = 0;
    std::vector<double> rho, ux, uy;

    MacroscopicFields() = default;
    MacroscopicFields(int nx_, int ny_)
        : nx(nx_), ny(ny_),
          rho(std::size_t(nx_) * ny_, 0.0),
          ux(std::size_t(nx_) * ny_, 0.0),
          uy(std::size_t(nx_) * ny_, 0.0) {}

    std::size_t idx(int x, int y) const { return std::size_t(y) * nx + x; }
};

struct VorticitySnapshot {
    int nx = 0;
    int ny = 0;
    std::int64_t step_index = 0;
    std::vector<double> omega; // nx*ny, x fastest
};

// Second-order D2Q9 equilibrium for one node.
inline std::array<double, kQ> compute_equilibrium(double rho, double ux, double uy) {
    if (!std::isfinite(rho) || !std::isfinite(ux) || !std::isfinite(uy))
        throw NumericalError("compute_equilibrium: non-finite input");
    const double usq = 1.5 * (ux * ux + uy * uy);
    std::array<double, kQ> feq;
    for (int i = 0; i < kQ; ++i) {
        const double eu = 3.0 * (kEx[i] * ux + kEy[i] * uy);
        feq[i] = kWeight[i] * rho * (1.0 + eu + 0.5 * eu * eu - usq);
    }
    return feq;
}

// BGK relaxation toward equilibrium for one node.
inline std::array<double, kQ> collide(const std::array<double, kQ>& f,
                                      const std::array<double, kQ>& feq, double tau) {
    if (!(tau > 0.5)) throw ConfigError("collide: tau must exceed 0.5");
    std::array<double, kQ> out;
    const double inv_tau = 1.0 / tau;
    for (int i = 0; i < kQ; ++i) out[i] = f[i] - (f[i] - feq[i]) * inv_tau;
    return out;
}

// Streaming with periodic wrap; boundary kernels overwrite the wrapped
// columns afterwards.
inline void propagate_into(const DistributionField& src, DistributionField& dst) {
    const int nx = src.nx, ny = src.ny;
    for (int i = 0; i < kQ; ++i) {
        const int ex = kEx[i], ey = kEy[i];
        const double* sp = src.data.data() + i * src.plane();
        double* dp = dst.data.data() + i * src.plane();
        parallel_for(std::size_t(ny), [&](std::size_t yb, std::size_t ye) {
            for (std::size_t y = yb; y < ye; ++y) {
                const int ysrc = (int(y) - ey + ny) % ny;
                const double* srow = sp + std::size_t(ysrc) * nx;
                double* drow = dp + y * nx;
                if (ex == 0) {
                    for (int x = 0; x < nx; ++x) drow[x] = srow[x];
                } else {
                    for (int x = 0; x < nx; ++x) drow[x] = srow[(x - ex + nx) % nx];
                }
            }
        });
    }
}

inline DistributionField propagate(const DistributionField& f) {
    DistributionField out(f.nx, f.ny);
    propagate_into(f, out);
    return out;
}

// At solid nodes every population is replaced by its opposite; fluid nodes
// are untouched.
inline void bounce_back_inplace(DistributionField& f, const ObstacleMask& mask) {
    const int nx = f.nx, ny = f.ny;
    const std::size_t plane = f.plane();
    parallel_for(std::size_t(ny), [&](std::size_t yb, std::size_t ye) {
        for (std::size_t y = yb; y < ye; ++y) {
            for (int x = 0; x < nx; ++x) {
                if (!mask.solid[y * nx + x]) continue;
                const std::size_t base = y * nx + x;
                // Swap the four opposite pairs (1,3), (2,4), (5,7), (6,8).
                std::swap(f.data[1 * plane + base], f.data[3 * plane + base]);
                std::swap(f.data[2 * plane + base], f.data[4 * plane + base]);
                std::swap(f.data[5 * plane + base], f.data[7 * plane + base]);
                std::swap(f.data[6 * plane + base], f.data[8 * plane + base]);
            }
        }
    });
}

inline DistributionField bounce_back(const DistributionField& f, const ObstacleMask& mask) {
    DistributionField out = f;
    bounce_back_inplace(out, mask);
    return out;
}

// Left column forced to equilibrium at (rho = 1, u = (u_inlet, 0)).
inline void apply_inflow_inplace(DistributionField& f, double u_inlet) {
    if (!(u_inlet < 0.2)) throw ConfigError("apply_inflow: u_inlet must stay below 0.2");
    const auto feq = compute_equilibrium(1.0, u_inlet, 0.0);
    for (int i = 0; i < kQ; ++i)
        for (int y = 0; y < f.ny; ++y) f.at(i, 0, y) = feq[i];
}

inline DistributionField apply_inflow(const DistributionField& f, double u_inlet) {
    DistributionField out = f;
    apply_inflow_inplace(out, u_inlet);
    return out;
}

// Zeroth and first moments. Throws on non-positive density at a fluid node.
inline void compute_macroscopics_into(const DistributionField& f, const ObstacleMask* mask,
                                      MacroscopicFields& m, std::int64_t step_index = -1) {
    const int nx = f.nx, ny = f.ny;
    const std::size_t plane = f.plane();
    std::atomic<bool> bad{false};
    parallel_for(std::size_t(ny), [&](std::size_t yb, std::size_t ye) {
        for (std::size_t y = yb; y < ye; ++y) {
            for (int x = 0; x < nx; ++x) {
                const std::size_t base = y * nx + x;
                double rho = 0.0, mx = 0.0, my = 0.0;
                for (int i = 0; i < kQ; ++i) {
                    const double v = f.data[i * plane + base];
                    rho += v;
                    mx += v * kEx[i];
                    my += v * kEy[i];
                }
                const bool fluid = mask == nullptr || !mask->solid[base];
                if (fluid && (!(rho > 0.0) || !std::isfinite(rho))) bad.store(true);
                m.rho[base] = rho;
                const double inv = rho != 0.0 ? 1.0 / rho : 0.0;
                m.ux[base] = mx * inv;
                m.uy[base] = my * inv;
            }
        }
    });
    if (bad.load())
        throw NumericalError("compute_macroscopics: non-positive density at a fluid node" +
                                 (step_index >= 0 ? " (step " + std::to_string(step_index) + ")"
                                                  : std::string{}),
                             step_index);
}

inline MacroscopicFields compute_macroscopics(const DistributionField& f,
                                              const ObstacleMask* mask = nullptr) {
    MacroscopicFields m(f.nx, f.ny);
    compute_macroscopics_into(f, mask, m);
    return m;
}

// Curl of the velocity field: central differences inside, one-sided at the
// domain edges, zero at solid nodes.
inline VorticitySnapshot compute_vorticity(const MacroscopicFields& m, const ObstacleMask& mask,
                                           std::int64_t step_index = 0) {
    const int nx = m.nx, ny = m.ny;
    if (nx < 3 || ny < 3) throw ConfigError("compute_vorticity: grid must be at least 3x3");
    VorticitySnapshot snap;
    snap.nx = nx;
    snap.ny = ny;
    snap.step_index = step_index;
    snap.omega.assign(std::size_t(nx) * ny, 0.0);
    auto duy_dx = [&](int x, int y) {
        if (x == 0) return m.uy[m.idx(1, y)] - m.uy[m.idx(0, y)];
        if (x == nx - 1) return m.uy[m.idx(nx - 1, y)] - m.uy[m.idx(nx - 2, y)];
        return 0.5 * (m.uy[m.idx(x + 1, y)] - m.uy[m.idx(x - 1, y)]);
    };
    auto dux_dy = [&](int x, int y) {
        if (y == 0) return m.ux[m.idx(x, 1)] - m.ux[m.idx(x, 0)];
        if (y == ny - 1) return m.ux[m.idx(x, ny - 1)] - m.ux[m.idx(x, ny - 2)];
        return 0.5 * (m.ux[m.idx(x, y + 1)] - m.ux[m.idx(x, y - 1)]);
    };
    parallel_for(std::size_t(ny), [&](std::size_t yb, std::size_t ye) {
        for (std::size_t y = yb; y < ye; ++y)
            for (int x = 0; x < nx; ++x)
                snap.omega[y * nx + x] =
                    mask.is_solid(x, int(y)) ? 0.0 : duy_dx(x, int(y)) - dux_dy(x, int(y));
    });
    return snap;
}

} // namespace flq::lbm
