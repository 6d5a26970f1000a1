#pragma once

/**
 * @file integrator.hpp
 * @brief Adaptive Dormand-Prince 8(5,3) integrator (DOP853) with dense output.
 *
 * Coefficients are those of Hairer's DOP853. The 7th-order dense-output
 * polynomial is differentiated analytically so observers receive both y(t) and
 * y'(t) at arbitrary sample times inside each accepted step.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace qlyap {

class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepperOptions {
    double rel_tol = 1e-9;
    double abs_tol = 1e-11;
    double initial_step = 0.0;  ///< 0 selects a step automatically
    double max_step = std::numeric_limits<double>::infinity();
    long max_steps = 20'000'000;
};

struct StepperStats {
    long accepted_steps = 0;
    long rejected_steps = 0;
    long rhs_evaluations = 0;
    double smallest_step = std::numeric_limits<double>::infinity();
    double largest_step = 0.0;
};

namespace dop853 {

inline constexpr int kStages = 12;
inline constexpr int kExtendedStages = 16;

// clang-format off
inline constexpr double c[16] = {0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274, 0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077, 0.6512820512820513, 0.6, 0.8571428571428571, 1.0, 1.0, 0.1, 0.2, 0.7777777777777778};
inline constexpr double a[16][16] = {
    {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636, 0.0, 0.0, 0.0, 0.0, 0.0},
    {0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259, 0.0, 0.0, 0.0, 0.0},
    {0.056167502283047954, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25350021021662483, -0.2462390374708025, -0.12419142326381637, 0.15329179827876568, 0.00820105229563469, 0.007567897660545699, -0.008298, 0.0, 0.0, 0.0},
    {0.03183464816350214, 0.0, 0.0, 0.0, 0.0, 0.028300909672366776, 0.053541988307438566, -0.05492374857139099, 0.0, 0.0, -0.00010834732869724932, 0.0003825710908356584, -0.00034046500868740456, 0.1413124436746325, 0.0, 0.0},
    {-0.42889630158379194, 0.0, 0.0, 0.0, 0.0, -4.697621415361164, 7.683421196062599, 4.06898981839711, 0.3567271874552811, 0.0, 0.0, 0.0, -0.0013990241651590145, 2.9475147891527724, -9.15095847217987, 0.0},
};
inline constexpr double b[12] = {0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259};
inline constexpr double e3[13] = {-0.18980075407240762, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, -0.4226823213237919, -0.1521609496625161, 0.20136540080403034, 0.02265179219836082, 0.0};
inline constexpr double e5[13] = {0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294, 0.0};
inline constexpr double d[4][16] = {
    {-8.428938276109013, 0.0, 0.0, 0.0, 0.0, 0.5667149535193777, -3.0689499459498917, 2.38466765651207, 2.117034582445028, -0.871391583777973, 2.2404374302607883, 0.6315787787694688, -0.08899033645133331, 18.148505520854727, -9.194632392478356, -4.436036387594894},
    {10.427508642579134, 0.0, 0.0, 0.0, 0.0, 242.28349177525817, 165.20045171727028, -374.5467547226902, -22.113666853125306, 7.733432668472264, -30.674084731089398, -9.332130526430229, 15.697238121770845, -31.139403219565178, -9.35292435884448, 35.81684148639408},
    {19.985053242002433, 0.0, 0.0, 0.0, 0.0, -387.0373087493518, -189.17813819516758, 527.8081592054236, -11.57390253995963, 6.8812326946963, -1.0006050966910838, 0.7777137798053443, -2.778205752353508, -60.19669523126412, 84.32040550667716, 11.99229113618279},
    {-25.69393346270375, 0.0, 0.0, 0.0, 0.0, -154.18974869023643, -231.5293791760455, 357.6391179106141, 93.40532418362432, -37.45832313645163, 104.0996495089623, 29.8402934266605, -43.53345659001114, 96.32455395918828, -39.17726167561544, -149.72683625798564},
};
// clang-format on

}  // namespace dop853

/// Continuous extension of one accepted step [t, t + h].
class DenseStep {
public:
    double t_begin() const { return t_; }
    double t_end() const { return t_ + h_; }

    /// y(t) = y0 + x(F0 + (1-x)(F1 + x(F2 + (1-x)(F3 + ...)))), x = (t - t0)/h.
    void evaluate(double t, Eigen::VectorXd& y, Eigen::VectorXd& dy) const {
        const double x = (t - t_) / h_;
        Eigen::VectorXd val = Eigen::VectorXd::Zero(y0_.size());
        Eigen::VectorXd der = Eigen::VectorXd::Zero(y0_.size());
        for (int i = 0; i < 7; ++i) {
            val += f_[static_cast<std::size_t>(6 - i)];
            if (i % 2 == 0) {
                der = der * x + val;
                val *= x;
            } else {
                der = der * (1.0 - x) - val;
                val *= (1.0 - x);
            }
        }
        y = y0_ + val;
        dy = der / h_;
    }

private:
    template <class Rhs, class Observer, class StepHook>
    friend StepperStats integrate_dop853(Rhs&&, Eigen::VectorXd, double, double, const std::vector<double>&,
                                         const StepperOptions&, Observer&&, StepHook&&);

    double t_ = 0.0;
    double h_ = 1.0;
    Eigen::VectorXd y0_;
    std::array<Eigen::VectorXd, 7> f_;
};

namespace detail {

inline Eigen::VectorXd stage_sum(const std::vector<Eigen::VectorXd>& k, const double* weights, int count) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(k[0].size());
    for (int j = 0; j < count; ++j) {
        if (weights[j] != 0.0) acc += weights[j] * k[static_cast<std::size_t>(j)];
    }
    return acc;
}

}  // namespace detail

/**
 * Integrates y' = rhs(t, y) from t0 to t1.
 *
 * `observe(t, y, dy)` is called for every requested sample time (sorted, inside
 * [t0, t1]) with dense-output values. After each accepted step `after_step(t, y,
 * step_index)` may modify y in place and must return true if it did.
 */
template <class Rhs, class Observer, class StepHook>
StepperStats integrate_dop853(Rhs&& rhs, Eigen::VectorXd y, double t0, double t1,
                              const std::vector<double>& sample_times, const StepperOptions& opt,
                              Observer&& observe, StepHook&& after_step) {
    using namespace dop853;
    if (!(t1 >= t0)) throw std::invalid_argument("integrate_dop853: t1 < t0");
    if (!std::is_sorted(sample_times.begin(), sample_times.end())) {
        throw std::invalid_argument("integrate_dop853: sample times must be sorted");
    }
    for (double ts : sample_times) {
        if (ts < t0 || ts > t1) throw std::invalid_argument("integrate_dop853: sample time outside range");
    }

    StepperStats stats;
    const Eigen::Index dim = y.size();
    std::vector<Eigen::VectorXd> k(kExtendedStages, Eigen::VectorXd(dim));
    Eigen::VectorXd ytmp(dim), ynew(dim), ys(dim), dys(dim);
    DenseStep dense;

    auto scale_of = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return Eigen::VectorXd((opt.abs_tol + opt.rel_tol * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix());
    };
    auto rms = [&](const Eigen::VectorXd& v) {
        return v.norm() / std::sqrt(static_cast<double>(std::max<Eigen::Index>(dim, 1)));
    };

    double t = t0;
    std::size_t next_sample = 0;
    rhs(t, y, k[0]);
    ++stats.rhs_evaluations;
    while (next_sample < sample_times.size() && sample_times[next_sample] <= t0) {
        observe(t0, y, k[0]);
        ++next_sample;
    }
    if (t1 == t0) return stats;

    const double span = t1 - t0;
    double h = opt.initial_step;
    if (h <= 0.0) {
        // Starting-step heuristic (Hairer, Norsett & Wanner I, II.4).
        const Eigen::VectorXd sc = scale_of(y, y);
        const double d0 = rms(y.cwiseQuotient(sc));
        const double d1 = rms(k[0].cwiseQuotient(sc));
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, span);
        ytmp = y + h0 * k[0];
        rhs(t + h0, ytmp, k[1]);
        ++stats.rhs_evaluations;
        const double d2 = rms((k[1] - k[0]).cwiseQuotient(sc)) / h0;
        const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                        : std::pow(0.01 / std::max(d1, d2), 1.0 / 8.0);
        h = std::min({100.0 * h0, h1, span});
    }
    h = std::min(h, opt.max_step);

    constexpr double safety = 0.9, min_factor = 0.333, max_factor = 6.0;
    bool last_rejected = false;
    long steps = 0;

    while (t < t1) {
        if (++steps > opt.max_steps) {
            throw IntegrationError("integrate_dop853: maximum number of steps exceeded at t = " + std::to_string(t));
        }
        bool last = false;
        if (t + 1.01 * h >= t1) {
            h = t1 - t;
            last = true;
        }
        if (h < 1e-14 * std::max(1.0, std::abs(t))) {
            throw IntegrationError("integrate_dop853: step size underflow at t = " + std::to_string(t));
        }

        for (int s = 1; s < kStages; ++s) {
            ytmp = y + h * detail::stage_sum(k, a[s], s);
            rhs(t + c[s] * h, ytmp, k[static_cast<std::size_t>(s)]);
        }
        ynew = y + h * detail::stage_sum(k, b, kStages);
        rhs(t + h, ynew, k[kStages]);
        stats.rhs_evaluations += kStages;

        const Eigen::VectorXd sc = scale_of(y, ynew);
        const Eigen::VectorXd err5 = detail::stage_sum(k, e5, kStages + 1).cwiseQuotient(sc);
        const Eigen::VectorXd err3 = detail::stage_sum(k, e3, kStages + 1).cwiseQuotient(sc);
        const double n5 = err5.squaredNorm();
        const double n3 = err3.squaredNorm();
        double err = 0.0;
        if (n5 > 0.0 || n3 > 0.0) {
            err = h * n5 / std::sqrt((n5 + 0.01 * n3) * static_cast<double>(dim));
        }
        if (!std::isfinite(err)) {
            throw IntegrationError("integrate_dop853: non-finite error estimate at t = " + std::to_string(t));
        }

        if (err <= 1.0) {
            ++stats.accepted_steps;
            stats.smallest_step = std::min(stats.smallest_step, h);
            stats.largest_step = std::max(stats.largest_step, h);
            const double t_next = last ? t1 : t + h;

            if (next_sample < sample_times.size() && sample_times[next_sample] <= t_next) {
                for (int s = kStages + 1; s < kExtendedStages; ++s) {
                    ytmp = y + h * detail::stage_sum(k, a[s], s);
                    rhs(t + c[s] * h, ytmp, k[static_cast<std::size_t>(s)]);
                }
                stats.rhs_evaluations += kExtendedStages - kStages - 1;
                dense.t_ = t;
                dense.h_ = h;
                dense.y0_ = y;
                const Eigen::VectorXd delta = ynew - y;
                dense.f_[0] = delta;
                dense.f_[1] = h * k[0] - delta;
                dense.f_[2] = 2.0 * delta - h * (k[kStages] + k[0]);
                for (int r = 0; r < 4; ++r) {
                    dense.f_[static_cast<std::size_t>(3 + r)] = h * detail::stage_sum(k, d[r], kExtendedStages);
                }
                while (next_sample < sample_times.size() && sample_times[next_sample] <= t_next) {
                    dense.evaluate(sample_times[next_sample], ys, dys);
                    observe(sample_times[next_sample], ys, dys);
                    ++next_sample;
                }
            }

            y = ynew;
            k[0] = k[kStages];
            t = t_next;
            if (after_step(t, y, stats.accepted_steps)) {
                rhs(t, y, k[0]);
                ++stats.rhs_evaluations;
            }
            double factor = err == 0.0 ? max_factor : std::min(max_factor, safety * std::pow(err, -1.0 / 8.0));
            if (last_rejected) factor = std::min(1.0, factor);
            h *= factor;
            last_rejected = false;
        } else {
            h *= std::max(min_factor, safety * std::pow(err, -1.0 / 8.0));
            last_rejected = true;
            ++stats.rejected_steps;
        }
        h = std::min(h, opt.max_step);
    }
    return stats;
}

/// Overload without a step hook.
template <class Rhs, class Observer>
StepperStats integrate_dop853(Rhs&& rhs, Eigen::VectorXd y, double t0, double t1,
                              const std::vector<double>& sample_times, const StepperOptions& opt,
                              Observer&& observe) {
    return integrate_dop853(std::forward<Rhs>(rhs), std::move(y), t0, t1, sample_times, opt,
                            std::forward<Observer>(observe), [](double, Eigen::VectorXd&, long) { return false; });
}

}  // namespace qlyap
