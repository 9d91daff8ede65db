#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nnforget {

/// Retention curve families, each a decreasing function of time t >= 0:
///   Exponential        a*exp(-t/tau) + c                      (a, tau, c)
///   PowerLaw           a*(1+t)^(-b) + c                       (a, b, c)
///   Logarithmic        a - b*ln(1+t)                          (a, b)
///   SummedExponential  a1*exp(-t/tau1) + a2*exp(-t/tau2) + c  (a1, tau1, a2, tau2, c)
enum class CurveFamily { Exponential, PowerLaw, Logarithmic, SummedExponential };

inline constexpr CurveFamily kAllFamilies[] = {CurveFamily::Exponential, CurveFamily::PowerLaw,
                                               CurveFamily::Logarithmic,
                                               CurveFamily::SummedExponential};

std::string_view family_name(CurveFamily family);
CurveFamily family_from_name(std::string_view name);
int parameter_count(CurveFamily family);
std::vector<std::string_view> parameter_names(CurveFamily family);

struct CurveModel {
    CurveFamily family = CurveFamily::PowerLaw;
    std::vector<double> params;

    bool operator==(const CurveModel&) const = default;
};

/// Throws ConfigError when parameters break the family's sign constraints.
void validate_model(const CurveModel& model);

double eval_model(const CurveModel& model, double t);

struct CurvePoints {
    std::vector<double> t;
    std::vector<double> y;

    std::size_t size() const { return t.size(); }
};

enum class FitStatus { Converged, IterationLimit, InsufficientPoints, Failed };
std::string_view status_name(FitStatus status);

struct FitResult {
    CurveModel model;
    FitStatus status = FitStatus::Failed;
    double sse = 0.0;
    double r_squared = 0.0;
    double aicc = 0.0;
    int n_points = 0;
    std::string message;
    // SSE at each multi-start initial point and at the end of each restart.
    std::vector<double> start_sse;
    std::vector<double> final_sse;

    bool ok() const { return status == FitStatus::Converged || status == FitStatus::IterationLimit; }
    bool converged() const { return status == FitStatus::Converged; }
};

struct FitOptions {
    int restarts = 16;
    int max_iterations = 2000;
    double tolerance = 1e-10;
    std::uint64_t seed = 0x5eed'f17cULL;
};

/// Parameter box used by fit_curve: a, a1, a2, c in [0, 1]; b in [0, 5];
/// tau, tau1, tau2 in [0.1, 10 * t_max].
struct ParameterBox {
    std::vector<double> lower;
    std::vector<double> upper;
};
ParameterBox parameter_box(CurveFamily family, double t_max);

double sum_squared_error(const CurvePoints& points, const CurveModel& model);

/// 1 - SSE/SST. A constant series yields 1 for an exact fit and -infinity
/// otherwise (reported as "undefined").
double r_squared(const CurvePoints& points, const CurveModel& model);

/// n ln(SSE/n) + 2k + 2k(k+1)/(n-k-1). SSE is floored at the level where the
/// RMS residual is 1e-8 of the data scale, so numerically exact fits tie and
/// fall back to the parameter-count tie-break.
double aicc(double sse, int n, int k, double data_scale);

/// Box-constrained multi-start Nelder-Mead least squares.
FitResult fit_curve(CurveFamily family, const CurvePoints& points, const FitOptions& options = {});

/// Fits every family; successful fits come first, ordered by AICc (ties to
/// fewer parameters), followed by families that could not be fitted.
std::vector<FitResult> compare_models(const CurvePoints& points, const FitOptions& options = {});

/// JSON fit report: {"families": [...], "selected": name-or-null}.
std::string fit_report_json(const std::vector<FitResult>& ranked);

}  // namespace nnforget
