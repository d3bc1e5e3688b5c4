#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "prgp/evalad.hpp"
#include "prgp/expr.hpp"

namespace prgp {

struct Problem;
struct Individual;

using Point = std::vector<double>;
using ForcingFn = std::function<double(std::span<const double>)>;

struct TrainingSet {
    std::vector<Point> points;
    std::vector<double> labels;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
};

struct OperatorTerm {
    DerivativeRequest request;
    double multiplier { 1.0 };
};

// weight * (sum_t multiplier_t * D^t f(x) - forcing(x)) at every point.
struct DiffOperatorSpec {
    std::string name;
    std::vector<OperatorTerm> terms;
    ForcingFn forcing;
    std::vector<Point> points;
    double weight { 1.0 };
};

struct FitnessVector {
    std::vector<double> dd;
    std::vector<double> pr;
    bool undefined { false };

    [[nodiscard]] std::size_t size() const noexcept { return dd.size() + pr.size(); }
    [[nodiscard]] std::vector<double> concatenated() const;
};

// Per-point residuals; undefined is set (and the value left at 0) where the
// model or a required derivative does not exist.
std::vector<double> data_residuals(const Program& model, std::span<const double> coeffs, const TrainingSet& training,
    bool& undefined);
std::vector<double> physics_residuals(const Program& model, std::span<const double> coeffs,
    std::span<const DiffOperatorSpec> ops, bool& undefined);

std::vector<double> data_residuals(const Individual& ind, const TrainingSet& training, bool& undefined);
std::vector<double> physics_residuals(const Individual& ind, std::span<const DiffOperatorSpec> ops, bool& undefined);

FitnessVector combined(const Individual& ind, const Problem& problem);

// Mean of squared entries; infinity when the vector is undefined.
double homogenize(const FitnessVector& v);
double homogenize(std::span<const double> residuals);

// Residual evaluation of one graph against one set of residual blocks,
// reusable across many coefficient vectors (the local optimizer's inner loop).
class FitnessEvaluator {
public:
    FitnessEvaluator(const ExpressionGraph& g, const TrainingSet& training, std::span<const DiffOperatorSpec> ops);
    FitnessEvaluator(const ExpressionGraph& g, const Problem& problem);

    [[nodiscard]] std::size_t residual_count() const noexcept { return count_; }
    [[nodiscard]] const Program& program() const noexcept { return program_; }

    // Writes dd then pr residuals; false when anything is undefined.
    bool residuals(std::span<const double> coeffs, std::span<double> out) const;
    [[nodiscard]] FitnessVector vector(std::span<const double> coeffs) const;
    [[nodiscard]] double scalar(std::span<const double> coeffs) const;

private:
    struct Plan {
        bool all_pure { true };
        int max_order { 0 };
        unsigned mask { 0 };
        // per term: axis (-1 for order 0) and order
        std::vector<std::pair<int, int>> pure_terms;
    };

    bool op_residuals(const DiffOperatorSpec& op, const Plan& plan, std::span<const double> coeffs, double* out) const;

    Program program_;
    const TrainingSet* training_;
    std::span<const DiffOperatorSpec> ops_;
    std::vector<Plan> plans_;
    std::size_t count_ { 0 };
};

} // namespace prgp
