#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include <msplit/errors.hpp>

namespace msplit {

/**
 * Knobs of the MSplit LBI iteration.
 *
 * Optional fields are resolved against the data when a Problem is built:
 *   alpha        -> default_step_size(X, nu, kappa)
 *   loss_scale   -> 1 / (2N)
 *   record_every -> max(1, floor(t_max / (500 alpha)))
 */
struct Hyperparams
{
    double kappa = 5.0;
    double nu = 1.0;
    std::optional<double> alpha;
    double t_max = 10.0;
    std::optional<std::size_t> record_every;
    std::optional<double> loss_scale;

    void validate() const
    {
        auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
        if (!positive(kappa)) throw InvalidArgument("kappa must be > 0");
        if (!positive(nu)) throw InvalidArgument("nu must be > 0");
        if (!positive(t_max)) throw InvalidArgument("t_max must be > 0");
        if (alpha && !positive(*alpha)) throw InvalidArgument("alpha must be > 0");
        if (loss_scale && !positive(*loss_scale)) throw InvalidArgument("loss_scale must be > 0");
        if (record_every && *record_every == 0) throw InvalidArgument("record_every must be >= 1");
    }
};

} // namespace msplit
