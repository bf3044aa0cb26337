#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace loom {

enum class Activation { hardmax, softmax };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SimConfig {
    double omega = 1e5;
    double epsilon = 0.5;
    double delta = 1e-2;
    double eta = 1.0 / 1024.0;
    double temperature = 1e-7;
    double annealed_temperature = 1e-5;
    Activation activation = Activation::hardmax;
    std::size_t max_iterations = 0;  // 0 selects (3n + 5)(n + 1)
    bool rounding_enabled = false;
    bool write_prevention_enabled = false;
    // Sentinel magnitude for visited/unvisited priorities, as a fraction of omega.
    double mask_fraction = 0.1;
    bool enforce_bounds = true;

    double mask_value() const { return mask_fraction * omega; }
    double omega_hat() const { return mask_value() - epsilon; }

    std::size_t iteration_limit(std::size_t n) const {
        return max_iterations ? max_iterations : (3 * n + 5) * (n + 1);
    }

    void validate() const {
        if (!(omega > 1.0)) throw ConfigError("omega must exceed 1");
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
        if (!(eta > 0.0 && eta < 0.5)) throw ConfigError("eta must lie in (0, 1/2)");
        if (!(temperature > 0.0) || !(annealed_temperature > 0.0))
            throw ConfigError("temperatures must be positive");
        if (!(mask_fraction > 0.0 && mask_fraction <= 1.0))
            throw ConfigError("mask_fraction must lie in (0, 1]");
        if (!(omega_hat() > 0.0)) throw ConfigError("mask value must exceed epsilon");
    }

    static SimConfig softmax_defaults() {
        SimConfig c;
        c.activation = Activation::softmax;
        c.rounding_enabled = true;
        c.write_prevention_enabled = true;
        return c;
    }
};

inline std::string to_string(Activation a) { return a == Activation::hardmax ? "hardmax" : "softmax"; }

}  // namespace loom
