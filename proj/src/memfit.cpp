#include "nnforget/memfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

#include "nnforget/errors.hpp"

namespace nnforget {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class ParamKind { Amplitude, Rate, TimeConstant, Offset };

std::vector<ParamKind> param_kinds(CurveFamily family) {
    using K = ParamKind;
    switch (family) {
        case CurveFamily::Exponential: return {K::Amplitude, K::TimeConstant, K::Offset};
        case CurveFamily::PowerLaw: return {K::Amplitude, K::Rate, K::Offset};
        case CurveFamily::Logarithmic: return {K::Amplitude, K::Rate};
        case CurveFamily::SummedExponential:
            return {K::Amplitude, K::TimeConstant, K::Amplitude, K::TimeConstant, K::Offset};
    }
    return {};
}

double eval_unchecked(CurveFamily family, const double* p, double t) {
    switch (family) {
        case CurveFamily::Exponential: return p[0] * std::exp(-t / p[1]) + p[2];
        case CurveFamily::PowerLaw: return p[0] * std::pow(1.0 + t, -p[1]) + p[2];
        case CurveFamily::Logarithmic: return p[0] - p[1] * std::log1p(t);
        case CurveFamily::SummedExponential:
            return p[0] * std::exp(-t / p[1]) + p[2] * std::exp(-t / p[3]) + p[4];
    }
    return std::numeric_limits<double>::quiet_NaN();
}

double sse_unchecked(CurveFamily family, const double* p, const CurvePoints& pts) {
    double s = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double r = eval_unchecked(family, p, pts.t[i]) - pts.y[i];
        s += r * r;
    }
    return std::isfinite(s) ? s : kInf;
}

void canonicalize(CurveModel& model) {
    if (model.family == CurveFamily::SummedExponential && model.params[1] > model.params[3]) {
        std::swap(model.params[0], model.params[2]);
        std::swap(model.params[1], model.params[3]);
    }
}

// Maps the unit cube onto the parameter box. Time constants are searched on a
// log scale since their box spans several decades.
class BoxMap {
public:
    BoxMap(CurveFamily family, const ParameterBox& box)
        : kinds_(param_kinds(family)), box_(box) {}

    std::vector<double> to_params(const std::vector<double>& u) const {
        std::vector<double> p(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double lo = box_.lower[i];
            const double hi = box_.upper[i];
            if (kinds_[i] == ParamKind::TimeConstant) {
                p[i] = std::exp(std::log(lo) + u[i] * (std::log(hi) - std::log(lo)));
            } else {
                p[i] = lo + u[i] * (hi - lo);
            }
            p[i] = std::clamp(p[i], lo, hi);
        }
        return p;
    }

private:
    std::vector<ParamKind> kinds_;
    ParameterBox box_;
};

double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

// Halton points with a seeded Cranley-Patterson rotation.
std::vector<std::vector<double>> start_points(int count, int dims, std::uint64_t seed) {
    static constexpr std::uint64_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> shift(static_cast<std::size_t>(dims));
    for (auto& s : shift) s = uni(rng);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < count; ++i) {
        std::vector<double> u(static_cast<std::size_t>(dims));
        for (int d = 0; d < dims; ++d) {
            const double v = radical_inverse(static_cast<std::uint64_t>(i + 1), primes[d]) +
                             shift[static_cast<std::size_t>(d)];
            u[static_cast<std::size_t>(d)] = v - std::floor(v);
        }
        pts.push_back(std::move(u));
    }
    return pts;
}

struct NelderMeadOutcome {
    std::vector<double> best;
    double best_value = kInf;
    bool converged = false;
};

// Projected Nelder-Mead on the unit cube. The simplex is rebuilt around the
// incumbent each time it collapses, until a rebuild stops improving the value
// by more than `tolerance` (relative) or the iteration budget runs out.
template <typename Objective>
NelderMeadOutcome nelder_mead(const Objective& f, std::vector<double> start, int max_iterations,
                              double tolerance) {
    const std::size_t k = start.size();
    auto clamp01 = [](std::vector<double>& x) {
        for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
    };
    auto converged_spread = [&](double lo, double hi) {
        return hi - lo <= tolerance * std::abs(lo) + std::numeric_limits<double>::min();
    };

    NelderMeadOutcome out;
    out.best = start;
    out.best_value = f(start);
    int iterations = 0;
    double step = 0.1;

    while (iterations < max_iterations) {
        std::vector<std::vector<double>> x(k + 1, out.best);
        std::vector<double> fx(k + 1);
        fx[0] = out.best_value;
        for (std::size_t i = 0; i < k; ++i) {
            auto& v = x[i + 1][i];
            v = (v + step <= 1.0) ? v + step : v - step;
            fx[i + 1] = f(x[i + 1]);
        }

        bool collapsed = false;
        std::vector<std::size_t> order(k + 1);
        while (iterations < max_iterations) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fx[a] < fx[b]; });
            {
                std::vector<std::vector<double>> xs(k + 1);
                std::vector<double> fs(k + 1);
                for (std::size_t i = 0; i <= k; ++i) {
                    xs[i] = std::move(x[order[i]]);
                    fs[i] = fx[order[i]];
                }
                x = std::move(xs);
                fx = std::move(fs);
            }
            if (converged_spread(fx[0], fx[k])) {
                collapsed = true;
                break;
            }
            ++iterations;

            std::vector<double> centroid(k, 0.0);
            for (std::size_t i = 0; i < k; ++i) {
                for (std::size_t d = 0; d < k; ++d) centroid[d] += x[i][d];
            }
            for (auto& c : centroid) c /= static_cast<double>(k);

            auto along = [&](double coef) {
                std::vector<double> p(k);
                for (std::size_t d = 0; d < k; ++d) p[d] = centroid[d] + coef * (x[k][d] - centroid[d]);
                clamp01(p);
                return p;
            };

            auto xr = along(-1.0);
            const double fr = f(xr);
            if (fr < fx[0]) {
                auto xe = along(-2.0);
                const double fe = f(xe);
                if (fe < fr) {
                    x[k] = std::move(xe);
                    fx[k] = fe;
                } else {
                    x[k] = std::move(xr);
                    fx[k] = fr;
                }
                continue;
            }
            if (fr < fx[k - 1]) {
                x[k] = std::move(xr);
                fx[k] = fr;
                continue;
            }
            const bool outside = fr < fx[k];
            auto xc = along(outside ? -0.5 : 0.5);
            const double fc = f(xc);
            if (outside ? fc <= fr : fc < fx[k]) {
                x[k] = std::move(xc);
                fx[k] = fc;
                continue;
            }
            for (std::size_t i = 1; i <= k; ++i) {
                for (std::size_t d = 0; d < k; ++d) x[i][d] = x[0][d] + 0.5 * (x[i][d] - x[0][d]);
                fx[i] = f(x[i]);
            }
        }

        const std::size_t best = static_cast<std::size_t>(
            std::min_element(fx.begin(), fx.end()) - fx.begin());
        const double previous = out.best_value;
        if (fx[best] <= out.best_value) {
            out.best = x[best];
            out.best_value = fx[best];
        }
        if (collapsed && !(previous - out.best_value > tolerance * std::abs(out.best_value)) &&
            !(out.best_value == 0.0 && previous > 0.0)) {
            out.converged = true;
            break;
        }
        if (out.best_value == 0.0) {
            out.converged = true;
            break;
        }
        step = std::max(step * 0.5, 1e-4);
    }
    return out;
}

void check_points(const CurvePoints& points) {
    if (points.t.size() != points.y.size()) throw ShapeError("t and y have different lengths");
    std::set<double> seen;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!std::isfinite(points.t[i]) || points.t[i] < 0.0) {
            throw DataError("time values must be finite and >= 0");
        }
        if (!std::isfinite(points.y[i])) throw DataError("retention values must be finite");
        if (!seen.insert(points.t[i]).second) throw DataError("time values must be distinct");
    }
}

double data_scale(const CurvePoints& points) {
    double s = 0.0;
    for (double v : points.y) s = std::max(s, std::abs(v));
    return s > 0.0 ? s : 1.0;
}

}  // namespace

std::string_view family_name(CurveFamily family) {
    switch (family) {
        case CurveFamily::Exponential: return "Exponential";
        case CurveFamily::PowerLaw: return "PowerLaw";
        case CurveFamily::Logarithmic: return "Logarithmic";
        case CurveFamily::SummedExponential: return "SummedExponential";
    }
    return "?";
}

CurveFamily family_from_name(std::string_view name) {
    for (auto f : kAllFamilies) {
        if (family_name(f) == name) return f;
    }
    throw ConfigError("unknown curve family '" + std::string(name) + "'");
}

int parameter_count(CurveFamily family) { return static_cast<int>(param_kinds(family).size()); }

std::vector<std::string_view> parameter_names(CurveFamily family) {
    switch (family) {
        case CurveFamily::Exponential: return {"a", "tau", "c"};
        case CurveFamily::PowerLaw: return {"a", "b", "c"};
        case CurveFamily::Logarithmic: return {"a", "b"};
        case CurveFamily::SummedExponential: return {"a1", "tau1", "a2", "tau2", "c"};
    }
    return {};
}

std::string_view status_name(FitStatus status) {
    switch (status) {
        case FitStatus::Converged: return "converged";
        case FitStatus::IterationLimit: return "iteration_limit";
        case FitStatus::InsufficientPoints: return "insufficient points";
        case FitStatus::Failed: return "failed";
    }
    return "?";
}

void validate_model(const CurveModel& model) {
    const auto kinds = param_kinds(model.family);
    if (model.params.size() != kinds.size()) {
        throw ConfigError(std::string(family_name(model.family)) + " expects " +
                          std::to_string(kinds.size()) + " parameters");
    }
    const auto names = parameter_names(model.family);
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        const double v = model.params[i];
        const std::string name(names[i]);
        if (!std::isfinite(v)) throw ConfigError("parameter " + name + " is not finite");
        switch (kinds[i]) {
            case ParamKind::Amplitude:
            case ParamKind::Rate:
                if (v < 0.0) throw ConfigError("parameter " + name + " must be >= 0");
                break;
            case ParamKind::TimeConstant:
                if (v <= 0.0) throw ConfigError("parameter " + name + " must be > 0");
                break;
            case ParamKind::Offset:
                if (v < 0.0 || v > 1.0) throw ConfigError("parameter " + name + " must lie in [0, 1]");
                break;
        }
    }
}

double eval_model(const CurveModel& model, double t) {
    validate_model(model);
    if (!(t >= 0.0)) throw ConfigError("eval_model requires t >= 0");
    return eval_unchecked(model.family, model.params.data(), t);
}

ParameterBox parameter_box(CurveFamily family, double t_max) {
    const double tau_lo = 0.1;
    const double tau_hi = std::max(tau_lo * 10.0, 10.0 * t_max);
    ParameterBox box;
    for (auto kind : param_kinds(family)) {
        switch (kind) {
            case ParamKind::Amplitude:
            case ParamKind::Offset:
                box.lower.push_back(0.0);
                box.upper.push_back(1.0);
                break;
            case ParamKind::Rate:
                box.lower.push_back(0.0);
                box.upper.push_back(5.0);
                break;
            case ParamKind::TimeConstant:
                box.lower.push_back(tau_lo);
                box.upper.push_back(tau_hi);
                break;
        }
    }
    return box;
}

double sum_squared_error(const CurvePoints& points, const CurveModel& model) {
    validate_model(model);
    check_points(points);
    return sse_unchecked(model.family, model.params.data(), points);
}

double r_squared(const CurvePoints& points, const CurveModel& model) {
    if (points.size() < 2) throw DataError("r_squared needs at least 2 points");
    const double sse = sum_squared_error(points, model);
    const double mean = std::accumulate(points.y.begin(), points.y.end(), 0.0) /
                        static_cast<double>(points.size());
    const bool constant = std::all_of(points.y.begin(), points.y.end(),
                                      [&](double v) { return v == points.y.front(); });
    if (constant) return sse == 0.0 ? 1.0 : -kInf;
    double sst = 0.0;
    for (double v : points.y) sst += (v - mean) * (v - mean);
    return 1.0 - sse / sst;
}

double aicc(double sse, int n, int k, double scale) {
    if (n - k - 1 <= 0) return kInf;
    const double floor_rms = 1e-8 * scale;
    const double floored = std::max(sse, static_cast<double>(n) * floor_rms * floor_rms);
    return n * std::log(floored / n) + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0);
}

FitResult fit_curve(CurveFamily family, const CurvePoints& points, const FitOptions& options) {
    check_points(points);
    const int k = parameter_count(family);
    const int n = static_cast<int>(points.size());
    if (n < 2 * k) {
        throw DataError(std::string(family_name(family)) + " needs at least " +
                        std::to_string(2 * k) + " points, got " + std::to_string(n));
    }
    const double t_max = *std::max_element(points.t.begin(), points.t.end());
    const BoxMap map(family, parameter_box(family, t_max));
    auto objective = [&](const std::vector<double>& u) {
        const auto p = map.to_params(u);
        return sse_unchecked(family, p.data(), points);
    };

    FitResult result;
    result.n_points = n;
    result.model.family = family;
    double best = kInf;
    bool best_converged = false;
    std::vector<double> best_u;
    for (const auto& u0 : start_points(options.restarts, k, options.seed)) {
        result.start_sse.push_back(objective(u0));
        const auto nm = nelder_mead(objective, u0, options.max_iterations, options.tolerance);
        result.final_sse.push_back(nm.best_value);
        if (nm.best_value < best) {
            best = nm.best_value;
            best_u = nm.best;
            best_converged = nm.converged;
        }
    }
    if (!std::isfinite(best)) {
        throw FitError(std::string(family_name(family)) + ": every restart diverged");
    }

    result.model.params = map.to_params(best_u);
    canonicalize(result.model);
    result.status = best_converged ? FitStatus::Converged : FitStatus::IterationLimit;
    result.sse = sse_unchecked(family, result.model.params.data(), points);
    result.r_squared = r_squared(points, result.model);
    result.aicc = aicc(result.sse, n, k, data_scale(points));
    return result;
}

std::vector<FitResult> compare_models(const CurvePoints& points, const FitOptions& options) {
    check_points(points);
    std::vector<FitResult> ok;
    std::vector<FitResult> failed;
    for (auto family : kAllFamilies) {
        try {
            ok.push_back(fit_curve(family, points, options));
        } catch (const DataError& e) {
            FitResult r;
            r.model.family = family;
            r.status = FitStatus::InsufficientPoints;
            r.n_points = static_cast<int>(points.size());
            r.message = e.what();
            failed.push_back(std::move(r));
        } catch (const FitError& e) {
            FitResult r;
            r.model.family = family;
            r.status = FitStatus::Failed;
            r.n_points = static_cast<int>(points.size());
            r.message = e.what();
            failed.push_back(std::move(r));
        }
    }
    std::stable_sort(ok.begin(), ok.end(), [](const FitResult& a, const FitResult& b) {
        if (a.aicc != b.aicc) return a.aicc < b.aicc;
        return parameter_count(a.model.family) < parameter_count(b.model.family);
    });
    ok.insert(ok.end(), std::make_move_iterator(failed.begin()),
              std::make_move_iterator(failed.end()));
    return ok;
}

std::string fit_report_json(const std::vector<FitResult>& ranked) {
    nlohmann::ordered_json report;
    report["families"] = nlohmann::ordered_json::array();
    for (const auto& r : ranked) {
        nlohmann::ordered_json j;
        j["family"] = family_name(r.model.family);
        j["status"] = status_name(r.status);
        j["converged"] = r.converged();
        if (r.ok()) {
            nlohmann::ordered_json params;
            const auto names = parameter_names(r.model.family);
            for (std::size_t i = 0; i < names.size(); ++i) params[std::string(names[i])] = r.model.params[i];
            j["parameters"] = params;
            j["sse"] = r.sse;
            if (std::isfinite(r.r_squared)) {
                j["r_squared"] = r.r_squared;
            } else {
                j["r_squared"] = "undefined";
            }
            j["aicc"] = r.aicc;
        } else {
            j["message"] = r.message;
        }
        j["n_points"] = r.n_points;
        report["families"].push_back(j);
    }
    if (!ranked.empty() && ranked.front().ok()) {
        report["selected"] = family_name(ranked.front().model.family);
    } else {
        report["selected"] = nullptr;
    }
    return report.dump(2) + "\n";
}

}  // namespace nnforget
