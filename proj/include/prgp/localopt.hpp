#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "prgp/problem.hpp"
#include "prgp/rng.hpp"

namespace prgp {

enum class OptMethod : std::uint8_t { levenberg_marquardt, bfgs };

struct OptConfig {
    OptMethod method { OptMethod::levenberg_marquardt };
    double init_low { -1.0 };
    double init_high { 1.0 };
    int restarts { 3 };
    int max_iterations { 200 };
    double residual_tol { 1e-16 }; // on the residual 2-norm
    double step_tol { 1e-14 };     // relative step size
    double reduction_tol { 1e-10 }; // relative decrease of the squared norm
    double jacobian_fd_step { 1e-7 };
    double initial_damping { 1e-3 };
    // Remaining restarts are skipped once the homogenized fitness is at or
    // below this value; 0 keeps every restart unless the residual vanishes.
    double target_fitness { 0.0 };

    friend bool operator==(const OptConfig&, const OptConfig&) = default;
};

struct CalibrationResult {
    std::vector<double> coeffs;
    double final_scalar_fitness { 0.0 };
    bool converged { false };
    int iterations_used { 0 };
};

// Fills the residual vector (resizing it as needed); false when undefined.
using ResidualFn = std::function<bool(std::span<const double>, std::vector<double>&)>;
// Non-finite return means undefined.
using ScalarFn = std::function<double(std::span<const double>)>;

CalibrationResult levenberg_marquardt(const ResidualFn& fn, std::size_t q, const OptConfig& cfg, Rng& rng);
CalibrationResult bfgs(const ScalarFn& fn, std::size_t q, const OptConfig& cfg, Rng& rng);

// Forward-difference Jacobian (row-major, residuals x parameters) as used by
// the LM solver. r0 must be fn(c). Columns whose perturbation is undefined
// on both sides are zero.
std::vector<double> fd_jacobian(const ResidualFn& fn, std::span<const double> c, std::span<const double> r0, double step);

// Fits the reachable constants of ind against the problem's combined residual
// vector and refreshes fitness and phenotype.
Individual calibrate(Individual ind, const Problem& problem, const OptConfig& cfg, Rng& rng);

// Values at problem.probes (NaN where undefined).
std::vector<double> phenotype(const Program& program, std::span<const double> coeffs, const Problem& problem);

} // namespace prgp
