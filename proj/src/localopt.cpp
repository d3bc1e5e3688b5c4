#include "prgp/localopt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace prgp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double squared_norm(std::span<const double> r)
{
    double s = 0.0;
    for (double v : r) {
        s += v * v;
    }
    return s;
}

double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

std::vector<double> random_start(std::size_t q, const OptConfig& cfg, Rng& rng)
{
    std::uniform_real_distribution<double> dist(cfg.init_low, cfg.init_high);
    std::vector<double> c(q);
    for (auto& v : c) {
        v = dist(rng);
    }
    return c;
}

int start_count(const OptConfig& cfg) { return std::max(1, cfg.restarts); }

struct Attempt {
    std::vector<double> c;
    double cost { kInf }; // squared norm for LM, objective for BFGS
    bool converged { false };
    int iterations { 0 };
};

Attempt lm_attempt(const ResidualFn& fn, std::vector<double> c, const OptConfig& cfg)
{
    Attempt out;
    std::vector<double> r;
    if (!fn(c, r)) {
        out.c = std::move(c);
        return out;
    }
    const auto m = static_cast<Eigen::Index>(r.size());
    const auto q = static_cast<Eigen::Index>(c.size());
    double cost = squared_norm(r);
    if (!std::isfinite(cost)) {
        out.c = std::move(c);
        return out;
    }
    double lambda = cfg.initial_damping;
    std::vector<double> c_new(c.size());
    std::vector<double> r_new;
    Eigen::MatrixXd aug(m + q, q);
    Eigen::VectorXd rhs(m + q);

    bool done = false;
    while (!done && out.iterations < cfg.max_iterations) {
        if (std::sqrt(cost) <= cfg.residual_tol) {
            out.converged = true;
            break;
        }
        ++out.iterations;
        const auto jac = fd_jacobian(fn, c, r, cfg.jacobian_fd_step);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> J(jac.data(), m, q);
        Eigen::VectorXd scale = J.colwise().squaredNorm().transpose();
        const double top = scale.maxCoeff();
        if (!(top > 0.0) || !std::isfinite(top)) {
            break;
        }
        scale = scale.cwiseMax(1e-12 * top);

        while (true) {
            aug.topRows(m) = J;
            aug.bottomRows(q).setZero();
            aug.bottomRows(q).diagonal() = (lambda * scale).cwiseSqrt();
            for (Eigen::Index i = 0; i < m; ++i) {
                rhs[i] = -r[static_cast<std::size_t>(i)];
            }
            rhs.tail(q).setZero();
            const Eigen::VectorXd delta = aug.colPivHouseholderQr().solve(rhs);
            const bool small_step = delta.norm() <= cfg.step_tol * (norm(c) + cfg.step_tol);
            bool finite_step = delta.allFinite();
            for (std::size_t j = 0; j < c.size(); ++j) {
                c_new[j] = c[j] + delta[static_cast<Eigen::Index>(j)];
            }
            double cost_new = kInf;
            if (finite_step && fn(c_new, r_new)) {
                cost_new = squared_norm(r_new);
            }
            if (std::isfinite(cost_new) && cost_new < cost) {
                const double reduction = (cost - cost_new) / cost;
                c.swap(c_new);
                r.swap(r_new);
                cost = cost_new;
                lambda = std::max(lambda / 10.0, 1e-20);
                if (small_step || reduction <= cfg.reduction_tol) {
                    out.converged = true;
                    done = true;
                }
                break;
            }
            if (small_step) {
                out.converged = true;
                done = true;
                break;
            }
            lambda *= 10.0;
            if (lambda > 1e20) {
                done = true;
                break;
            }
        }
    }
    if (std::sqrt(cost) <= cfg.residual_tol) {
        out.converged = true;
    }
    out.c = std::move(c);
    out.cost = cost;
    return out;
}

std::vector<double> fd_gradient(const ScalarFn& fn, std::span<const double> x, double fx)
{
    static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
    std::vector<double> g(x.size(), 0.0);
    std::vector<double> p(x.begin(), x.end());
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double h = base * (1.0 + std::abs(x[j]));
        p[j] = x[j] + h;
        const double fp = fn(p);
        p[j] = x[j] - h;
        const double fm = fn(p);
        p[j] = x[j];
        const bool ok_p = std::isfinite(fp);
        const bool ok_m = std::isfinite(fm);
        if (ok_p && ok_m) {
            g[j] = (fp - fm) / (2.0 * h);
        } else if (ok_p) {
            g[j] = (fp - fx) / h;
        } else if (ok_m) {
            g[j] = (fx - fm) / h;
        }
    }
    return g;
}

Attempt bfgs_attempt(const ScalarFn& fn, std::vector<double> x0, const OptConfig& cfg)
{
    Attempt out;
    const auto q = static_cast<Eigen::Index>(x0.size());
    double f = fn(x0);
    if (!std::isfinite(f)) {
        out.c = std::move(x0);
        return out;
    }
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(x0.data(), q);
    auto grad = [&](const Eigen::VectorXd& at, double fat) {
        auto g = fd_gradient(fn, std::span<const double>(at.data(), static_cast<std::size_t>(q)), fat);
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(g.data(), q));
    };
    Eigen::VectorXd g = grad(x, f);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(q, q);
    bool first = true;
    const double f_tol = cfg.residual_tol * cfg.residual_tol;

    while (out.iterations < cfg.max_iterations) {
        if (f <= f_tol) {
            out.converged = true;
            break;
        }
        ++out.iterations;
        Eigen::VectorXd p = -H * g;
        double slope = g.dot(p);
        if (!(slope < 0.0)) {
            H.setIdentity();
            p = -g;
            slope = g.dot(p);
            if (!(slope < 0.0)) {
                out.converged = true; // stationary
                break;
            }
        }
        double alpha = 1.0;
        double f_new = kInf;
        Eigen::VectorXd x_new;
        bool found = false;
        bool hit_undefined = false;
        while (alpha > 1e-30) {
            x_new = x + alpha * p;
            f_new = fn(std::span<const double>(x_new.data(), static_cast<std::size_t>(q)));
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * alpha * slope) {
                found = true;
                break;
            }
            hit_undefined = hit_undefined || !std::isfinite(f_new);
            alpha *= 0.5;
        }
        if (!found) {
            break;
        }
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd g_new = grad(x_new, f_new);
        const Eigen::VectorXd y = g_new - g;
        const double reduction = (f - f_new) / std::max(std::abs(f), std::numeric_limits<double>::min());
        const bool small_step = s.norm() <= cfg.step_tol * (x.norm() + cfg.step_tol);
        x = x_new;
        f = f_new;
        g = g_new;
        const double sy = s.dot(y);
        if (sy > 0.0) {
            if (first) {
                H *= sy / y.squaredNorm();
                first = false;
            }
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(q, q);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
        }
        if (small_step || reduction <= cfg.reduction_tol) {
            // stalling against the edge of the defined region is not convergence
            out.converged = !hit_undefined;
            break;
        }
    }
    if (f <= f_tol) {
        out.converged = true;
    }
    out.c.assign(x.data(), x.data() + q);
    out.cost = f;
    return out;
}

template <typename Run>
CalibrationResult multistart(std::size_t q, const OptConfig& cfg, Rng& rng, Run run, double cost_to_fitness)
{
    CalibrationResult best;
    best.final_scalar_fitness = kInf;
    int iterations = 0;
    bool have = false;
    for (int s = 0; s < start_count(cfg); ++s) {
        Attempt a = run(random_start(q, cfg, rng));
        iterations += a.iterations;
        const double fit = std::isfinite(a.cost) ? a.cost * cost_to_fitness : kInf;
        if (!have || fit < best.final_scalar_fitness) {
            best.coeffs = std::move(a.c);
            best.final_scalar_fitness = fit;
            best.converged = a.converged;
            have = true;
        }
        if (best.converged && best.final_scalar_fitness <= cfg.target_fitness) {
            break;
        }
    }
    best.iterations_used = iterations;
    return best;
}

} // namespace

std::vector<double> fd_jacobian(const ResidualFn& fn, std::span<const double> c, std::span<const double> r0, double step)
{
    const std::size_t m = r0.size();
    const std::size_t q = c.size();
    std::vector<double> jac(m * q, 0.0);
    std::vector<double> p(c.begin(), c.end());
    std::vector<double> r;
    for (std::size_t j = 0; j < q; ++j) {
        const double h = step * (1.0 + std::abs(c[j]));
        double sign = 1.0;
        p[j] = c[j] + h;
        bool ok = fn(p, r) && r.size() == m;
        if (!ok) {
            sign = -1.0;
            p[j] = c[j] - h;
            ok = fn(p, r) && r.size() == m;
        }
        p[j] = c[j];
        if (!ok) {
            continue;
        }
        for (std::size_t i = 0; i < m; ++i) {
            jac[i * q + j] = sign * (r[i] - r0[i]) / h;
        }
    }
    return jac;
}

CalibrationResult levenberg_marquardt(const ResidualFn& fn, std::size_t q, const OptConfig& cfg, Rng& rng)
{
    if (q == 0) {
        CalibrationResult out;
        std::vector<double> r;
        const bool ok = fn({}, r);
        out.final_scalar_fitness = ok ? homogenize(std::span<const double>(r)) : kInf;
        out.converged = ok;
        return out;
    }
    // cost is the squared norm; the homogenized fitness divides by the
    // residual count, which the first defined evaluation reveals
    std::size_t m = 0;
    auto counting = [&](std::span<const double> c, std::vector<double>& r) {
        const bool ok = fn(c, r);
        m = r.size();
        return ok;
    };
    auto result = multistart(q, cfg, rng, [&](std::vector<double> c0) { return lm_attempt(counting, std::move(c0), cfg); }, 1.0);
    if (m > 0 && std::isfinite(result.final_scalar_fitness)) {
        result.final_scalar_fitness /= static_cast<double>(m);
    }
    return result;
}

CalibrationResult bfgs(const ScalarFn& fn, std::size_t q, const OptConfig& cfg, Rng& rng)
{
    if (q == 0) {
        CalibrationResult out;
        const double f = fn({});
        out.final_scalar_fitness = std::isfinite(f) ? f : kInf;
        out.converged = std::isfinite(f);
        return out;
    }
    return multistart(q, cfg, rng, [&](std::vector<double> x0) { return bfgs_attempt(fn, std::move(x0), cfg); }, 1.0);
}

std::vector<double> phenotype(const Program& program, std::span<const double> coeffs, const Problem& problem)
{
    std::vector<double> out;
    out.reserve(problem.probes.size());
    for (const auto& p : problem.probes) {
        auto v = program.evaluate(coeffs, p);
        out.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

Individual calibrate(Individual ind, const Problem& problem, const OptConfig& cfg, Rng& rng)
{
    const FitnessEvaluator ev(ind.graph, problem);
    ind.coeffs.resize(ind.graph.slot_count(), 0.0);

    std::vector<std::size_t> active;
    const auto live = ind.graph.reachable();
    for (std::size_t i = 0; i < ind.graph.size(); ++i) {
        if (live[i] && ind.graph[i].op == OperatorKind::load_constant) {
            active.push_back(static_cast<std::size_t>(ind.graph[i].payload));
        }
    }
    std::sort(active.begin(), active.end());

    if (!active.empty()) {
        std::vector<double> full = ind.coeffs;
        auto expand = [&](std::span<const double> c) {
            for (std::size_t i = 0; i < active.size(); ++i) {
                full[active[i]] = c[i];
            }
        };
        CalibrationResult res;
        if (cfg.method == OptMethod::levenberg_marquardt) {
            ResidualFn fn = [&](std::span<const double> c, std::vector<double>& r) {
                expand(c);
                r.resize(ev.residual_count());
                return ev.residuals(full, r);
            };
            res = levenberg_marquardt(fn, active.size(), cfg, rng);
        } else {
            ScalarFn fn = [&](std::span<const double> c) {
                expand(c);
                return ev.scalar(full);
            };
            res = bfgs(fn, active.size(), cfg, rng);
        }
        expand(res.coeffs);
        ind.coeffs = full;
    }
    ind.fitness = ev.scalar(ind.coeffs);
    ind.phenotype = phenotype(ev.program(), ind.coeffs, problem);
    ind.evaluated = true;
    return ind;
}

} // namespace prgp
