// Model parameters for the SOS wetting system: inverse temperature beta,
// the derived gradient weight J = e^{-2 beta}, and the pinning reward h
// (equivalently the offset u = h - h_w(beta) from the critical point).
#pragma once

#include <cmath>
#include <stdexcept>

namespace sos {

inline double wetting_critical_point(double beta) {
    if (!(beta > 0)) throw std::invalid_argument("wetting_critical_point: beta must be > 0");
    // -log(1 - e^{-4 beta}), written to keep full precision for large beta
    return -std::log1p(-std::exp(-4.0 * beta));
}

struct ModelParams {
    double beta = 1.0;
    double j = 0.0;  // e^{-2 beta}, cached
    double h = 0.0;  // pinning reward per contact at level 0

    static ModelParams from_beta_h(double beta, double h = 0.0) {
        if (!(beta > 0)) throw std::invalid_argument("ModelParams: beta must be > 0");
        ModelParams p;
        p.beta = beta;
        p.j = std::exp(-2.0 * beta);
        p.h = h;
        return p;
    }
    /// h = h_w(beta) + u.
    static ModelParams from_beta_u(double beta, double u) {
        ModelParams p = from_beta_h(beta);
        p.h = wetting_critical_point(beta) + u;
        return p;
    }
    /// Toy parameterization by J directly (beta = -log(J)/2).
    static ModelParams from_j(double j, double h = 0.0) {
        if (!(j > 0.0 && j < 1.0)) throw std::invalid_argument("ModelParams: J must be in (0,1)");
        return from_beta_h(-0.5 * std::log(j), h);
    }

    double u() const { return h - wetting_critical_point(beta); }
};

}  // namespace sos
