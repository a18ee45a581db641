#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "ciegad/errors.hpp"

namespace ciegad {

/// Every scalar constant of the method in one place. Defaults follow the
/// reference configuration; validate() pins the documented bounds before any
/// backend traffic.
struct HyperParams {
    double kappa = 800.0;  // cluster-count scaling
    int high = 18;         // cluster-count cap
    int low = 3;           // cluster-count floor

    double rho = 0.5;       // augmentation ratio, T = floor(rho * N)
    double epsilon = 1e-6;  // inverse-frequency guard

    double weight_alpha = 0.5;   // priority: inverse size
    double weight_beta = 0.25;   // priority: inter-cluster separation
    double weight_gamma = 0.25;  // priority: intra-cluster sparsity

    int k_nn = 8;        // representative selection radius
    int set_size_m = 10;  // inner/outer set size
    int profile_m = 10;   // core/periphery exemplar count

    double quantile_lo = 0.70;
    double quantile_hi = 0.85;
    double margin_gamma = 0.03;  // extrapolation outward margin

    double theta_intra = 0.85;   // intra-batch similarity cutoff
    double theta_prompt = 0.90;  // prompt-overlap similarity cutoff
    double judge_threshold = 3.0;

    int batch_per_mode = 10;
    int max_cycles_per_cluster = 0;  // 0: auto, ceil(5 * quota / batch) + 10

    double reg_cov = 1e-6;
    std::uint64_t seed = 0;

    int prompt_char_budget = 16000;
    bool interp_between = false;        // experimental Eq-variant switch
    bool select_from_real_only = false;  // restrict set selection to real members

    int effective_max_cycles(long long cluster_quota) const {
        if (max_cycles_per_cluster > 0) return max_cycles_per_cluster;
        return static_cast<int>(std::ceil(5.0 * static_cast<double>(cluster_quota) /
                                          static_cast<double>(batch_per_mode))) +
               10;
    }

    void validate() const {
        if (kappa <= 0.0) throw ConfigError("kappa must be > 0");
        if (low < 1 || high < low) throw ConfigError("need 1 <= low <= high");
        if (rho <= 0.0) throw ConfigError("rho must be > 0");
        if (epsilon <= 0.0) throw ConfigError("epsilon must be > 0");
        if (weight_alpha < 0.0 || weight_beta < 0.0 || weight_gamma < 0.0) {
            throw ConfigError("priority weights must be >= 0");
        }
        if (weight_alpha + weight_beta + weight_gamma <= 0.0) {
            throw ConfigError("at least one priority weight must be > 0");
        }
        if (k_nn < 1) throw ConfigError("k_nn must be >= 1");
        if (set_size_m < 1) throw ConfigError("set_size_m must be >= 1");
        if (profile_m < 1) throw ConfigError("profile_m must be >= 1");
        if (!(0.0 <= quantile_lo && quantile_lo < quantile_hi && quantile_hi <= 1.0)) {
            throw ConfigError("quantile band must satisfy 0 <= lo < hi <= 1");
        }
        if (margin_gamma < 0.0) throw ConfigError("margin_gamma must be >= 0");
        if (!(theta_intra > 0.0 && theta_intra <= 1.0)) {
            throw ConfigError("theta_intra must be in (0, 1]");
        }
        if (!(theta_prompt > 0.0 && theta_prompt <= 1.0)) {
            throw ConfigError("theta_prompt must be in (0, 1]");
        }
        if (judge_threshold < 1.0 || judge_threshold > 5.0) {
            throw ConfigError("judge_threshold must be in [1, 5]");
        }
        if (batch_per_mode < 1) throw ConfigError("batch_per_mode must be >= 1");
        if (max_cycles_per_cluster < 0) throw ConfigError("max_cycles_per_cluster must be >= 0");
        if (reg_cov < 0.0) throw ConfigError("reg_cov must be >= 0");
        if (prompt_char_budget < 256) throw ConfigError("prompt_char_budget too small");
    }
};

/// Component switches mirroring the ablation variants.
struct AblationToggles {
    bool enable_profile = true;
    bool enable_interpolation = true;
    bool enable_extrapolation = true;
    bool enable_geometry_filter = true;

    void validate() const {
        if (!enable_interpolation && !enable_extrapolation) {
            throw ConfigError("at least one of interpolation/extrapolation must be enabled");
        }
    }
};

}  // namespace ciegad
