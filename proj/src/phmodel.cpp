#include "durdecomp/phmodel.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include "durdecomp/error.hpp"
#include "durdecomp/kernels.hpp"

namespace durdecomp {

void PiecewiseSpec::validate() const {
    auto check = [&](const std::vector<double>& cuts, const char* field) {
        if (cuts.empty() || cuts.front() != 0.0)
            throw ConfigError(field, "first cutpoint must be 0");
        for (std::size_t k = 1; k < cuts.size(); ++k)
            if (!(cuts[k] > cuts[k - 1]))
                throw ConfigError(field, "cutpoints must be strictly increasing");
        if (!(horizon > cuts.back()))
            throw ConfigError("horizon", "must exceed the last cutpoint");
    };
    check(exit_cuts, "exit_cuts");
    check(treat_cuts, "treat_cuts");
}

PiecewiseSpec PiecewiseSpec::uniform(int segments, double width, double horizon) {
    if (segments < 1) throw ConfigError("segments", "must be at least 1");
    if (!(width > 0.0)) throw ConfigError("segment_width", "must be positive");
    PiecewiseSpec s;
    s.exit_cuts.clear();
    for (int k = 0; k < segments; ++k) s.exit_cuts.push_back(k * width);
    s.treat_cuts = s.exit_cuts;
    s.horizon = horizon;
    s.validate();
    return s;
}

int segment_of(const std::vector<double>& cuts, double t) {
    // number of cuts strictly below t, minus one
    const auto it = std::lower_bound(cuts.begin(), cuts.end(), t);
    return std::max(0, static_cast<int>(it - cuts.begin()) - 1);
}

namespace {

double segment_end(const std::vector<double>& cuts, double horizon, int k) {
    return k + 1 < static_cast<int>(cuts.size()) ? cuts[k + 1] : horizon;
}

// Adds the overlap of (a, b] with each segment to out[k * stride].
template <class F>
void for_each_overlap(const std::vector<double>& cuts, double horizon, double a, double b, F&& f) {
    if (!(b > a)) return;
    const int K = static_cast<int>(cuts.size());
    for (int k = segment_of(cuts, a <= 0.0 ? 1e-300 : std::nextafter(a, b)); k < K; ++k) {
        const double lo = std::max(a, cuts[k]);
        const double hi = std::min(b, segment_end(cuts, horizon, k));
        if (hi > lo) f(k, hi - lo);
        if (segment_end(cuts, horizon, k) >= b) break;
    }
}

void check_interval(const PiecewiseSpec& spec, double t1, double t2) {
    if (t1 < 0.0 || t2 > spec.horizon * (1.0 + 1e-12) || t2 < t1)
        throw DataError("interval (" + std::to_string(t1) + ", " + std::to_string(t2) +
                        "] outside model coverage [0, " + std::to_string(spec.horizon) + "]");
}

}  // namespace

HazardParams::HazardParams(int K, int Ks, int p)
    : exit_segments(K), treat_segments(Ks), covariates(p), theta(Eigen::VectorXd::Zero(size(K, Ks, p))) {}

std::vector<std::string> HazardParams::names(const std::vector<std::string>& cov) const {
    std::vector<std::string> out(static_cast<std::size_t>(theta.size()));
    for (int z = 0; z < 2; ++z)
        for (int tr = 0; tr < 2; ++tr)
            for (int k = 0; k < exit_segments; ++k)
                out[exit_index(z, tr, k)] = "log_lambdaT[z=" + std::to_string(z) + "," +
                                            (tr ? "treated" : "untreated") +
                                            ",seg=" + std::to_string(k + 1) + "]";
    for (int z = 0; z < 2; ++z)
        for (int k = 0; k < treat_segments; ++k)
            out[treat_index(z, k)] =
                "log_lambdaS[z=" + std::to_string(z) + ",seg=" + std::to_string(k + 1) + "]";
    for (int j = 0; j < covariates; ++j) {
        const std::string n = j < static_cast<int>(cov.size()) ? cov[j] : "x" + std::to_string(j + 1);
        out[beta_exit_index(j)] = "betaT[" + n + "]";
        out[beta_treat_index(j)] = "betaS[" + n + "]";
    }
    return out;
}

// ---------------------------------------------------------------------------

LogLikelihood::LogLikelihood(const PeriodData& data, const PiecewiseSpec& spec)
    : K_(spec.exit_segments()), Ks_(spec.treat_segments()),
      p_(static_cast<int>(data.covariate_count())) {
    spec.validate();
    events_.assign(4 * K_ + 2 * Ks_, 0.0);
    exposure_.assign(4 * K_ + 2 * Ks_, 0.0);
    std::size_t count[2] = {0, 0};
    for (const auto& sp : data.spells) {
        if (sp.regime != 0 && sp.regime != 1) throw DataError("spell '" + sp.id + "' has bad regime");
        ++count[sp.regime];
    }
    for (int z = 0; z < 2; ++z) {
        auto& g = group_[z];
        g.n = count[z];
        g.x.assign(static_cast<std::size_t>(p_) * g.n, 0.0);
        g.exit_exp.assign(static_cast<std::size_t>(2 * K_) * g.n, 0.0);
        g.treat_exp.assign(static_cast<std::size_t>(Ks_) * g.n, 0.0);
        g.exit_xd.assign(p_, 0.0);
        g.treat_xd.assign(p_, 0.0);
    }
    std::size_t row[2] = {0, 0};
    for (const auto& sp : data.spells) {
        if (sp.terminal > spec.horizon * (1.0 + 1e-12))
            throw DataError("spell '" + sp.id + "' ends at " + std::to_string(sp.terminal) +
                            ", outside model coverage " + std::to_string(spec.horizon));
        if (static_cast<int>(sp.covariates.size()) != p_)
            throw DataError("spell '" + sp.id + "' has the wrong number of covariates");
        const int z = sp.regime;
        auto& g = group_[z];
        const std::size_t i = row[z]++;
        const std::size_t n = g.n;
        for (int j = 0; j < p_; ++j) g.x[j * n + i] = sp.covariates[j];

        const double T = sp.terminal;
        const double switch_at = sp.treated() ? sp.treat - 1.0 : T;
        for_each_overlap(spec.exit_cuts, spec.horizon, 0.0, std::min(switch_at, T), [&](int k, double len) {
            g.exit_exp[k * n + i] += len;
            exposure_[(2 * z) * K_ + k] += len;
        });
        if (sp.treated())
            for_each_overlap(spec.exit_cuts, spec.horizon, switch_at, T, [&](int k, double len) {
                g.exit_exp[(K_ + k) * n + i] += len;
                exposure_[(2 * z + 1) * K_ + k] += len;
            });
        if (sp.exited) {
            const int tr = sp.treated() ? 1 : 0;
            events_[(2 * z + tr) * K_ + segment_of(spec.exit_cuts, T)] += 1.0;
            for (int j = 0; j < p_; ++j) g.exit_xd[j] += sp.covariates[j];
        }

        const double treat_end = sp.treated() ? static_cast<double>(sp.treat) : T;
        for_each_overlap(spec.treat_cuts, spec.horizon, 0.0, treat_end, [&](int k, double len) {
            g.treat_exp[k * n + i] += len;
            exposure_[4 * K_ + z * Ks_ + k] += len;
        });
        if (sp.treated()) {
            events_[4 * K_ + z * Ks_ + segment_of(spec.treat_cuts, sp.treat)] += 1.0;
            for (int j = 0; j < p_; ++j) g.treat_xd[j] += sp.covariates[j];
        }
    }
}

std::vector<int> LogLikelihood::zero_columns() const {
    std::vector<int> out;
    for (int j = 0; j < p_; ++j) {
        bool zero = true;
        for (const auto& g : group_)
            for (std::size_t i = 0; i < g.n && zero; ++i) zero = g.x[j * g.n + i] == 0.0;
        if (zero) out.push_back(j);
    }
    return out;
}

double LogLikelihood::operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad) const {
    if (theta.size() != parameter_count())
        throw FitError("parameter vector has length " + std::to_string(theta.size()) +
                       ", expected " + std::to_string(parameter_count()));
    for (Eigen::Index k = 0; k < theta.size(); ++k)
        if (!std::isfinite(theta[k]))
            throw FitError("non-finite parameter at index " + std::to_string(k));
    if (grad) grad->setZero(theta.size());

    const HazardParams idx(K_, Ks_, p_);
    double ll = 0.0;
    std::vector<double> eta, r, cum, rc;
    for (int z = 0; z < 2; ++z) {
        const auto& g = group_[z];
        const std::size_t n = g.n;
        if (n == 0) continue;
        eta.assign(n, 0.0);
        r.resize(n);
        cum.resize(n);
        rc.resize(n);
        auto col = [n](const std::vector<double>& v, int c) {
            return std::span<const double>(v.data() + static_cast<std::size_t>(c) * n, n);
        };

        // one process at a time: columns, baseline indices, coefficient offset, event tallies
        auto process = [&](const std::vector<double>& exp_cols, int ncols, auto base_index,
                           Eigen::Index beta0, const std::vector<double>& xd) {
            std::fill(eta.begin(), eta.end(), 0.0);
            for (int j = 0; j < p_; ++j) kernels::axpy(theta[beta0 + j], col(g.x, j), eta);
            kernels::exp(eta, r);
            std::fill(cum.begin(), cum.end(), 0.0);
            for (int c = 0; c < ncols; ++c) {
                const Eigen::Index b = base_index(c);
                const double lam = std::exp(theta[b]);
                kernels::axpy(lam, col(exp_cols, c), cum);
                ll += events_[b] * theta[b];
                if (grad) (*grad)[b] += events_[b] - lam * kernels::dot(r, col(exp_cols, c));
            }
            for (int j = 0; j < p_; ++j) ll += xd[j] * theta[beta0 + j];
            ll -= kernels::dot(r, cum);
            if (grad && p_ > 0) {
                kernels::mul(r, cum, rc);
                for (int j = 0; j < p_; ++j)
                    (*grad)[beta0 + j] += xd[j] - kernels::dot(rc, col(g.x, j));
            }
        };
        process(g.exit_exp, 2 * K_,
                [&](int c) { return idx.exit_index(z, c / K_, c % K_); },
                idx.beta_exit_index(0), g.exit_xd);
        process(g.treat_exp, Ks_, [&](int c) { return idx.treat_index(z, c); },
                idx.beta_treat_index(0), g.treat_xd);
    }
    return ll;
}

double log_likelihood(const HazardParams& params, const PeriodData& data,
                      const PiecewiseSpec& spec, Eigen::VectorXd* grad) {
    return LogLikelihood(data, spec)(params.theta, grad);
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd observed_information(const LogLikelihood& ll, const Eigen::VectorXd& theta,
                                     const std::vector<int>& free) {
    const auto m = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd H(m, m);
    Eigen::VectorXd gp, gm;
    Eigen::VectorXd t = theta;
    for (Eigen::Index a = 0; a < m; ++a) {
        const int j = free[a];
        const double h = std::max(1e-5, 1e-5 * std::abs(theta[j]));
        t[j] = theta[j] + h;
        ll(t, &gp);
        t[j] = theta[j] - h;
        ll(t, &gm);
        t[j] = theta[j];
        for (Eigen::Index b = 0; b < m; ++b) H(b, a) = -(gp[free[b]] - gm[free[b]]) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

namespace {

class MeanNegLogLik final : public ceres::FirstOrderFunction {
public:
    MeanNegLogLik(const LogLikelihood& ll, Eigen::VectorXd base, std::vector<int> free, double n)
        : ll_(ll), base_(std::move(base)), free_(std::move(free)), scale_(1.0 / n) {}

    bool Evaluate(const double* x, double* cost, double* gradient) const override {
        Eigen::VectorXd theta = expand(x);
        for (Eigen::Index k = 0; k < theta.size(); ++k)
            if (!std::isfinite(theta[k]) || std::abs(theta[k]) > 700.0) return false;
        Eigen::VectorXd g;
        double v;
        try {
            v = ll_(theta, gradient ? &g : nullptr);
        } catch (const FitError&) {
            return false;
        }
        if (!std::isfinite(v)) return false;
        *cost = -v * scale_;
        if (gradient)
            for (std::size_t a = 0; a < free_.size(); ++a) gradient[a] = -g[free_[a]] * scale_;
        return true;
    }
    int NumParameters() const override { return static_cast<int>(free_.size()); }

    Eigen::VectorXd expand(const double* x) const {
        Eigen::VectorXd theta = base_;
        for (std::size_t a = 0; a < free_.size(); ++a) theta[free_[a]] = x[a];
        return theta;
    }

private:
    const LogLikelihood& ll_;
    Eigen::VectorXd base_;
    std::vector<int> free_;
    double scale_;
};

double free_inf_norm(const Eigen::VectorXd& g, const std::vector<int>& free) {
    double m = 0.0;
    for (int j : free) m = std::max(m, std::abs(g[j]));
    return m;
}

}  // namespace

FitResult fit(const PeriodData& data, const PiecewiseSpec& spec, const FitOptions& opts) {
    if (data.spells.empty()) throw DataError("no spells to fit");
    const LogLikelihood ll(data, spec);
    HazardParams params(spec, ll.covariates());
    const auto names = params.names(data.covariate_names);

    std::vector<std::string> empty;
    std::vector<int> boundary;
    const auto& ev = ll.cell_events();
    const auto& ex = ll.cell_exposure();
    for (std::size_t c = 0; c < ev.size(); ++c) {
        if (ev[c] > 0.0) {
            params.theta[static_cast<Eigen::Index>(c)] = std::log(ev[c] / ex[c]);
        } else if (opts.zero_event_cells == ZeroEventCells::boundary) {
            params.theta[static_cast<Eigen::Index>(c)] = kBoundaryLogRate;
            boundary.push_back(static_cast<int>(c));
        } else {
            empty.push_back(names[c]);
        }
    }
    if (!empty.empty()) {
        std::string msg = "unidentified baseline cells (no events): ";
        for (std::size_t k = 0; k < empty.size(); ++k) msg += (k ? ", " : "") + empty[k];
        msg += "; merge segments, shorten the horizon, or allow boundary cells";
        throw FitError(msg, empty);
    }

    FitResult res;
    res.spec = spec;
    res.covariate_names = data.covariate_names;
    res.parameter_names = names;
    res.spells = data.size();
    std::vector<int> free;
    {
        std::vector<bool> fixed(static_cast<std::size_t>(params.theta.size()), false);
        for (int c : boundary) fixed[c] = true;
        res.boundary = boundary;
        for (int j : ll.zero_columns()) {
            fixed[params.beta_exit_index(j)] = true;
            fixed[params.beta_treat_index(j)] = true;
        }
        for (Eigen::Index k = 0; k < params.theta.size(); ++k)
            (fixed[k] ? res.fixed : free).push_back(static_cast<int>(k));
    }

    const double n = static_cast<double>(data.size());
    auto* fn = new MeanNegLogLik(ll, params.theta, free, n);
    ceres::GradientProblem problem(fn);  // takes ownership
    std::vector<double> x(free.size());
    for (std::size_t a = 0; a < free.size(); ++a) x[a] = params.theta[free[a]];

    ceres::GradientProblemSolver::Options o;
    o.line_search_direction_type = ceres::BFGS;
    o.max_num_iterations = opts.max_iterations;
    o.gradient_tolerance = opts.gradient_tolerance;
    o.function_tolerance = opts.function_tolerance;
    o.parameter_tolerance = 1e-14;
    o.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    if (!free.empty()) ceres::Solve(o, problem, x.data(), &summary);

    Eigen::VectorXd theta = fn->expand(x.data());
    Eigen::VectorXd g;
    double value = ll(theta, &g);
    res.iterations = static_cast<int>(summary.iterations.size());
    res.termination = free.empty() ? "no free parameters" : ceres::TerminationTypeToString(summary.termination_type);

    // Newton refinement on the observed information.
    Eigen::MatrixXd info;
    for (int step = 0; step < opts.newton_polish_steps && !free.empty(); ++step) {
        info = observed_information(ll, theta, free);
        Eigen::VectorXd gf(static_cast<Eigen::Index>(free.size()));
        for (std::size_t a = 0; a < free.size(); ++a) gf[a] = g[free[a]];
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
        const Eigen::VectorXd dir = ldlt.solve(gf);
        if (!dir.allFinite()) break;
        bool moved = false;
        for (double lambda = 1.0; lambda > 1e-4; lambda *= 0.5) {
            Eigen::VectorXd trial = theta;
            for (std::size_t a = 0; a < free.size(); ++a) trial[free[a]] += lambda * dir[a];
            Eigen::VectorXd gt;
            double vt;
            try {
                vt = ll(trial, &gt);
            } catch (const FitError&) {
                continue;
            }
            if (std::isfinite(vt) && vt >= value - 1e-12 * std::abs(value)) {
                theta = trial;
                value = vt;
                g = gt;
                moved = true;
                break;
            }
        }
        if (!moved || free_inf_norm(g, free) / n < 1e-12) break;
    }

    res.log_likelihood = value;
    res.gradient_norm = free_inf_norm(g, free);
    res.params = params;
    res.params.theta = theta;

    const bool converged = free.empty() ||
                           summary.termination_type == ceres::CONVERGENCE ||
                           res.gradient_norm / n < opts.gradient_tolerance;
    if (!converged) {
        std::ostringstream msg;
        msg << "optimizer stopped without convergence (" << res.termination << ", "
            << res.iterations << " iterations, max |score|/N = " << res.gradient_norm / n
            << "): " << summary.message;
        throw FitError(msg.str(), {}, std::vector<double>(theta.data(), theta.data() + theta.size()));
    }

    res.covariance = Eigen::MatrixXd::Zero(theta.size(), theta.size());
    if (!opts.compute_covariance || free.empty()) return res;
    info = observed_information(ll, theta, free);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    const auto& lam = eig.eigenvalues();
    const double top = lam.cwiseAbs().maxCoeff();
    if (!(lam[0] > 1e-10 * top)) {
        std::vector<std::string> loaded;
        for (Eigen::Index a = 0; a < lam.size(); ++a) {
            bool hit = false;
            for (Eigen::Index c = 0; c < lam.size() && !(lam[c] > 1e-10 * top); ++c)
                hit = hit || std::abs(eig.eigenvectors()(a, c)) > 0.1;
            if (hit) loaded.push_back(names[free[a]]);
        }
        std::string msg = "singular information matrix; near-collinear parameters: ";
        for (std::size_t k = 0; k < loaded.size(); ++k) msg += (k ? ", " : "") + loaded[k];
        throw FitError(msg, loaded, std::vector<double>(theta.data(), theta.data() + theta.size()));
    }
    const Eigen::MatrixXd cov = eig.eigenvectors() * lam.cwiseInverse().asDiagonal() *
                                eig.eigenvectors().transpose();
    for (std::size_t a = 0; a < free.size(); ++a)
        for (std::size_t b = 0; b < free.size(); ++b)
            res.covariance(free[a], free[b]) = cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    return res;
}

// ---------------------------------------------------------------------------

double exit_baseline_integral(const HazardParams& p, const PiecewiseSpec& spec, int z, int s,
                              double t1, double t2) {
    check_interval(spec, t1, t2);
    double acc = 0.0;
    const double sw = s > 0 ? s - 1.0 : t2;
    for_each_overlap(spec.exit_cuts, spec.horizon, t1, std::min(t2, sw),
                     [&](int k, double len) { acc += len * p.exit_rate(z, 0, k); });
    if (s > 0)
        for_each_overlap(spec.exit_cuts, spec.horizon, std::max(t1, sw), t2,
                         [&](int k, double len) { acc += len * p.exit_rate(z, 1, k); });
    return acc;
}

double exit_cumulative_hazard(const HazardParams& p, const PiecewiseSpec& spec, double xb, int z,
                              int s, double t1, double t2) {
    return std::exp(xb) * exit_baseline_integral(p, spec, z, s, t1, t2);
}

double treat_baseline_integral(const HazardParams& p, const PiecewiseSpec& spec, int z, double t) {
    check_interval(spec, 0.0, t);
    double acc = 0.0;
    for_each_overlap(spec.treat_cuts, spec.horizon, 0.0, t,
                     [&](int k, double len) { acc += len * p.treat_rate(z, k); });
    return acc;
}

double treat_baseline_rate(const HazardParams& p, const PiecewiseSpec& spec, int z, int s) {
    check_interval(spec, s - 1.0, s);
    return p.treat_rate(z, segment_of(spec.treat_cuts, s));
}

double linear_index_exit(const HazardParams& p, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != p.covariates) throw DataError("covariate vector length mismatch");
    double v = 0.0;
    for (int j = 0; j < p.covariates; ++j) v += x[j] * p.theta[p.beta_exit_index(j)];
    return v;
}

double linear_index_treat(const HazardParams& p, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != p.covariates) throw DataError("covariate vector length mismatch");
    double v = 0.0;
    for (int j = 0; j < p.covariates; ++j) v += x[j] * p.theta[p.beta_treat_index(j)];
    return v;
}

double predict_survival(const HazardParams& p, const PiecewiseSpec& spec,
                        const std::vector<double>& x, int z, int s, double t1, double t2) {
    return std::exp(-exit_cumulative_hazard(p, spec, linear_index_exit(p, x), z, s, t1, t2));
}

double predict_treatment_density(const HazardParams& p, const PiecewiseSpec& spec,
                                 const std::vector<double>& x, int z, int s) {
    const double r = std::exp(linear_index_treat(p, x));
    return treat_baseline_rate(p, spec, z, s) * r *
           std::exp(-r * treat_baseline_integral(p, spec, z, s));
}

double predict_treatment_mass(const HazardParams& p, const PiecewiseSpec& spec,
                              const std::vector<double>& x, int z, int s) {
    const double r = std::exp(linear_index_treat(p, x));
    return std::exp(-r * treat_baseline_integral(p, spec, z, s - 1.0)) -
           std::exp(-r * treat_baseline_integral(p, spec, z, s));
}

}  // namespace durdecomp
