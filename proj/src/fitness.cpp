#include "prgp/fitness.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "prgp/problem.hpp"

namespace prgp {

std::vector<double> FitnessVector::concatenated() const
{
    std::vector<double> out;
    out.reserve(size());
    out.insert(out.end(), dd.begin(), dd.end());
    out.insert(out.end(), pr.begin(), pr.end());
    return out;
}

double homogenize(std::span<const double> residuals)
{
    if (residuals.empty()) {
        return 0.0;
    }
    double sum = 0.0;
    for (double r : residuals) {
        sum += r * r;
    }
    const double mse = sum / static_cast<double>(residuals.size());
    return std::isfinite(mse) ? mse : std::numeric_limits<double>::infinity();
}

double homogenize(const FitnessVector& v)
{
    if (v.undefined) {
        return std::numeric_limits<double>::infinity();
    }
    return homogenize(std::span<const double>(v.concatenated()));
}

std::size_t Problem::physics_point_count() const
{
    std::size_t m = 0;
    for (const auto& op : operators) {
        m += op.points.size();
    }
    return m;
}

std::string to_string(ProblemKind kind)
{
    return kind == ProblemKind::euler_bernoulli ? "eb" : "poisson";
}

ProblemKind parse_problem_kind(std::string_view text)
{
    if (text == "eb" || text == "euler_bernoulli") {
        return ProblemKind::euler_bernoulli;
    }
    if (text == "poisson") {
        return ProblemKind::poisson;
    }
    throw std::invalid_argument("unknown problem '" + std::string(text) + "'");
}

FitnessEvaluator::FitnessEvaluator(
    const ExpressionGraph& g, const TrainingSet& training, std::span<const DiffOperatorSpec> ops)
    : program_(g)
    , training_(&training)
    , ops_(ops)
{
    count_ = training.size();
    for (const auto& op : ops) {
        if (op.terms.empty()) {
            throw std::invalid_argument("differential operator without terms");
        }
        Plan plan;
        for (const auto& t : op.terms) {
            if (t.request.orders.size() != static_cast<std::size_t>(g.dimension())) {
                throw std::invalid_argument("derivative request dimension mismatch");
            }
            const int total = t.request.total_order();
            if (total > kMaxDerivativeOrder) {
                throw std::invalid_argument("derivative order above 4");
            }
            if (!t.request.is_pure() || g.dimension() > kMaxAxes) {
                plan.all_pure = false;
                continue;
            }
            int axis = -1;
            for (std::size_t a = 0; a < t.request.orders.size(); ++a) {
                if (t.request.orders[a] > 0) {
                    axis = static_cast<int>(a);
                }
            }
            if (axis >= 0) {
                plan.mask |= 1U << static_cast<unsigned>(axis);
            }
            plan.max_order = std::max(plan.max_order, total);
            plan.pure_terms.emplace_back(axis, total);
        }
        plans_.push_back(std::move(plan));
        count_ += op.points.size();
    }
}

FitnessEvaluator::FitnessEvaluator(const ExpressionGraph& g, const Problem& problem)
    : FitnessEvaluator(g, problem.training, problem.operators)
{
}

bool FitnessEvaluator::op_residuals(
    const DiffOperatorSpec& op, const Plan& plan, std::span<const double> coeffs, double* out) const
{
    bool ok = true;
    for (std::size_t p = 0; p < op.points.size(); ++p) {
        const auto& x = op.points[p];
        double sum = 0.0;
        bool defined = true;
        if (plan.all_pure && plan.max_order > 0) {
            auto ad = program_.axis_derivatives(coeffs, x, plan.max_order, plan.mask);
            if (!ad) {
                defined = false;
            } else {
                for (std::size_t t = 0; t < op.terms.size(); ++t) {
                    const auto [axis, order] = plan.pure_terms[t];
                    const double v = axis < 0 ? ad->value
                                              : ad->d[static_cast<std::size_t>(axis)][static_cast<std::size_t>(order)];
                    sum += op.terms[t].multiplier * v;
                }
            }
        } else {
            for (const auto& t : op.terms) {
                auto v = program_.derivative(coeffs, x, t.request);
                if (!v) {
                    defined = false;
                    break;
                }
                sum += t.multiplier * *v;
            }
        }
        if (defined) {
            const double forcing = op.forcing ? op.forcing(x) : 0.0;
            const double r = op.weight * (sum - forcing);
            if (std::isfinite(r)) {
                out[p] = r;
                continue;
            }
        }
        out[p] = 0.0;
        ok = false;
    }
    return ok;
}

bool FitnessEvaluator::residuals(std::span<const double> coeffs, std::span<double> out) const
{
    if (out.size() != count_) {
        throw std::invalid_argument("residual buffer size mismatch");
    }
    bool ok = true;
    const auto& tr = *training_;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        auto v = program_.evaluate(coeffs, tr.points[i]);
        const double r = v ? *v - tr.labels[i] : 0.0;
        if (!v || !std::isfinite(r)) {
            ok = false;
            out[i] = 0.0;
        } else {
            out[i] = r;
        }
    }
    std::size_t offset = tr.size();
    for (std::size_t k = 0; k < ops_.size(); ++k) {
        ok = op_residuals(ops_[k], plans_[k], coeffs, out.data() + offset) && ok;
        offset += ops_[k].points.size();
    }
    return ok;
}

FitnessVector FitnessEvaluator::vector(std::span<const double> coeffs) const
{
    std::vector<double> all(count_);
    FitnessVector v;
    v.undefined = !residuals(coeffs, all);
    const auto n = static_cast<std::ptrdiff_t>(training_->size());
    v.dd.assign(all.begin(), all.begin() + n);
    v.pr.assign(all.begin() + n, all.end());
    return v;
}

double FitnessEvaluator::scalar(std::span<const double> coeffs) const
{
    thread_local std::vector<double> buf;
    buf.resize(count_);
    if (!residuals(coeffs, buf)) {
        return std::numeric_limits<double>::infinity();
    }
    return homogenize(std::span<const double>(buf));
}

std::vector<double> data_residuals(
    const Program& model, std::span<const double> coeffs, const TrainingSet& training, bool& undefined)
{
    std::vector<double> out(training.size(), 0.0);
    for (std::size_t i = 0; i < training.size(); ++i) {
        auto v = model.evaluate(coeffs, training.points[i]);
        if (!v || !std::isfinite(*v - training.labels[i])) {
            undefined = true;
            continue;
        }
        out[i] = *v - training.labels[i];
    }
    return out;
}

std::vector<double> physics_residuals(
    const Program& model, std::span<const double> coeffs, std::span<const DiffOperatorSpec> ops, bool& undefined)
{
    std::vector<double> out;
    for (const auto& op : ops) {
        for (const auto& x : op.points) {
            double sum = 0.0;
            bool defined = true;
            for (const auto& t : op.terms) {
                auto v = model.derivative(coeffs, x, t.request);
                if (!v) {
                    defined = false;
                    break;
                }
                sum += t.multiplier * *v;
            }
            const double r = defined ? op.weight * (sum - (op.forcing ? op.forcing(x) : 0.0)) : 0.0;
            if (!defined || !std::isfinite(r)) {
                undefined = true;
                out.push_back(0.0);
            } else {
                out.push_back(r);
            }
        }
    }
    return out;
}

std::vector<double> data_residuals(const Individual& ind, const TrainingSet& training, bool& undefined)
{
    return data_residuals(Program(ind.graph), ind.coeffs, training, undefined);
}

std::vector<double> physics_residuals(const Individual& ind, std::span<const DiffOperatorSpec> ops, bool& undefined)
{
    return physics_residuals(Program(ind.graph), ind.coeffs, ops, undefined);
}

FitnessVector combined(const Individual& ind, const Problem& problem)
{
    return FitnessEvaluator(ind.graph, problem).vector(ind.coeffs);
}

} // namespace prgp
