#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nbsc/analysis.hpp"
#include "nbsc/presets.hpp"

using namespace nbsc;

namespace {

ChannelRealization make_chan(double gain, double sigma2)
{
    ChannelRealization c;
    c.h = c.h_est = {std::sqrt(gain), 0.0};
    c.sigma2 = sigma2;
    return c;
}

double q_ref(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// pairwise Q sum straight from the point lists
double brute_exact(const Constellation& a, const Constellation& b, double h, double sigma2)
{
    double s = 0.0;
    for (const auto& p : a.points())
        for (const auto& q : b.points()) s += q_ref((h * std::abs(p - q) / 2.0) / std::sqrt(sigma2 / 2.0));
    return s / static_cast<double>(a.size() * b.size());
}

} // namespace

TEST(QFunction, KnownValues)
{
    EXPECT_DOUBLE_EQ(q_function(0.0), 0.5);
    EXPECT_NEAR(q_function(1.959963984540054), 0.025, 1e-15);
    EXPECT_NEAR(q_function(3.0), 1.3498980316300945e-3, 1e-17);
    // series check: Q(x) = 1/2 − φ-weighted odd series for small x
    for (double x : {0.1, 0.5, 1.0}) {
        double term = x, sum = x;
        for (int n = 1; n < 40; ++n) {
            term *= x * x / (2 * n + 1);
            sum += term;
        }
        const double ref = 0.5 - std::exp(-x * x / 2) / std::sqrt(2 * std::numbers::pi) * sum;
        EXPECT_NEAR(q_function(x), ref, 1e-14);
    }
}

TEST(SinrCorrect, Substitution)
{
    ModulationMode m;
    m.id = 1;
    m.far_mod = Modulation::qpsk;
    m.near_mod = Modulation::qpsk;
    m.power_far = 0.8;
    m.power_near = 0.2;
    EXPECT_NEAR(sinr_correct(m, make_chan(1.0, 0.1)), 2.0, 1e-14);
    EXPECT_NEAR(sinr_correct(m, make_chan(2.0, 0.1)), 4.0, 1e-13);
    EXPECT_EQ(sinr_correct(presets::case1().mode(0), make_chan(1.0, 0.1)), 0.0);
}

TEST(SinrMisclassified, SameModeReducesToCorrect)
{
    for (const auto& t : {presets::case1(), presets::case2(), presets::case3()})
        for (int l = 1; l < t.size(); ++l)
            for (double s2 : {1.0, 0.01}) {
                const auto c = make_chan(0.7, s2);
                EXPECT_DOUBLE_EQ(sinr_misclassified(t, l, l, c), sinr_correct(t.mode(l), c));
                EXPECT_EQ(interference_terms(t, l, l).total(), 0.0);
            }
}

TEST(SinrMisclassified, Case1PowerMismatchClosedForm)
{
    const auto t = presets::case1();
    const auto c = make_chan(1.0, 0.01);
    // same orders: index-matched pairs differ only in amplitude, E|a|² = 1
    auto closed = [&](int l, int m) {
        const double df = std::sqrt(t.mode(l).power_far) - std::sqrt(t.mode(m).power_far);
        const double dn = std::sqrt(t.mode(l).power_near) - std::sqrt(t.mode(m).power_near);
        return t.mode(m).power_near / (df * df + dn * dn + c.sigma2);
    };
    // enumerate the 4x4 far and near index pairs
    auto enumerated = [&](int l, int m) {
        const auto q = base_constellation(4);
        double ef = 0.0, en = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            ef += std::norm(std::sqrt(t.mode(l).power_far) * q[i] - std::sqrt(t.mode(m).power_far) * q[i]) / 4;
            en += std::norm(std::sqrt(t.mode(l).power_near) * q[i] - std::sqrt(t.mode(m).power_near) * q[i]) / 4;
        }
        return t.mode(m).power_near / (ef + en + c.sigma2);
    };
    EXPECT_NEAR(sinr_misclassified(t, 2, 3, c), closed(2, 3), 1e-12);
    EXPECT_NEAR(sinr_misclassified(t, 2, 3, c), enumerated(2, 3), 1e-12);
    EXPECT_LT(sinr_misclassified(t, 2, 3, c), sinr_correct(t.mode(2), c));

    const double eta22 = sinr_correct(t.mode(2), c);
    const double eta21 = sinr_misclassified(t, 2, 1, c);
    EXPECT_NEAR(eta21, enumerated(2, 1), 1e-12);
    EXPECT_EQ(sinr_condition(t, 2, 1, c), eta22 >= eta21);
}

TEST(SinrMisclassified, NearestPolicyForDifferentFarOrders)
{
    const auto t = presets::case2();
    // far orders differ for modes 1 (QPSK) and 2 (16QAM): both policies pair by nearest point
    const auto a = interference_terms(t, 1, 2, SicPolicy::matched_index);
    const auto b = interference_terms(t, 1, 2, SicPolicy::nearest);
    EXPECT_DOUBLE_EQ(a.far, b.far);
    double ef = 0.0;
    const auto& fl = t.far_set(1);
    const auto& fm = t.far_set(2);
    for (const auto& s : fl.points()) {
        double best = 1e9;
        for (const auto& r : fm.points()) best = std::min(best, std::norm(s - r));
        ef += best / static_cast<double>(fl.size());
    }
    EXPECT_NEAR(a.far, ef, 1e-14);
    // same near order (16QAM): index matched
    double en = 0.0;
    for (std::size_t k = 0; k < 16; ++k) en += std::norm(t.near_set(1)[k] - t.near_set(2)[k]) / 16;
    EXPECT_NEAR(a.near, en, 1e-14);
    EXPECT_THROW(interference_terms(t, 0, 1), std::invalid_argument);
}

TEST(SinrCondition, LargerNearPowerAlwaysHolds)
{
    for (const auto& t : {presets::case1(), presets::case2(), presets::case3()})
        for (int l = 1; l < t.size(); ++l)
            for (int m = 1; m < t.size(); ++m)
                for (double s2 : {10.0, 1.0, 1e-3, 1e-9}) {
                    const auto c = make_chan(1.0, s2);
                    if (t.mode(l).power_near >= t.mode(m).power_near) {
                        EXPECT_TRUE(sinr_condition(t, l, m, c));
                    }
                    if (s2 == 1e-9 && l != m) {
                        EXPECT_TRUE(sinr_condition(t, l, m, c)) << l << " " << m;
                    }
                }
}

TEST(SinrCondition, MatchesEtaComparisonOnGrid)
{
    const auto t = presets::case3();
    int checked = 0;
    for (int l = 1; l < t.size(); ++l)
        for (int m = 1; m < t.size(); ++m)
            for (double s2 : {3.0, 0.3, 0.03, 0.003}) {
                const auto c = make_chan(0.9, s2);
                EXPECT_EQ(sinr_condition(t, l, m, c), sinr_correct(t.mode(l), c) >= sinr_misclassified(t, l, m, c));
                ++checked;
            }
    EXPECT_GE(checked, 20);
}

TEST(SinrModel, EtaConventions)
{
    const auto t = presets::case1();
    const SinrModel model(t);
    const auto c = make_chan(0.5, 0.1);
    EXPECT_NEAR(model.eta(0, 0, c), 5.0, 1e-12);
    EXPECT_EQ(model.eta(0, 2, c), 0.0);
    EXPECT_EQ(model.eta(2, 0, c), 0.0);
    EXPECT_NEAR(model.eta(2, 3, c), sinr_misclassified(t, 2, 3, c), 1e-14);
    EXPECT_NEAR(model.rate(1, 1, c), std::log2(1 + 0.2 * 5.0), 1e-12);
    const auto r = sinr_report(t, c);
    EXPECT_EQ(r.eta_correct[0], 0.0);
    EXPECT_NEAR(r.eta_correct[1], 1.0, 1e-12);
    EXPECT_EQ(r.eta_mis[0][1], 0.0);
}

TEST(McErrorProb, MatchesPairwiseOracle)
{
    const auto t = presets::case1();
    for (int l = 1; l < 4; ++l)
        for (int m = 1; m < 4; ++m) {
            if (l == m) continue;
            for (double snr : {0.0, 10.0, 20.0}) {
                const auto c = make_chan(1.0, noise_variance(snr));
                EXPECT_NEAR(mc_error_prob(t, l, m, c, true), brute_exact(t.full_set(l), t.full_set(m), 1.0, c.sigma2),
                            1e-13);
                EXPECT_DOUBLE_EQ(mc_error_prob(t, l, m, c, true), mc_error_prob(t, m, l, c, true));
            }
        }
}

TEST(McErrorProb, VanishesWithNoise)
{
    const auto t = presets::case1();
    const auto c = make_chan(1.0, 1e-9);
    EXPECT_LT(mc_error_prob(t, 1, 2, c, true), 1e-12);
    EXPECT_LT(mc_error_prob(t, 1, 2, c, false), 1e-12);
    EXPECT_THROW(mc_error_prob(t, 1, 2, make_chan(1.0, 0.0), true), std::invalid_argument);
}

TEST(McErrorProb, ApproximationBelowExact)
{
    const auto t = presets::case1();
    for (int l = 1; l < 4; ++l)
        for (int m = 1; m < 4; ++m) {
            if (l == m) continue;
            for (int k = 0; k < 10; ++k) {
                const auto c = make_chan(1.0, noise_variance(4.0 * k));
                EXPECT_LE(mc_error_prob(t, l, m, c, false), mc_error_prob(t, l, m, c, true));
            }
        }
}

TEST(McErrorProb, Case1RatioAt20dB)
{
    const auto t = presets::case1();
    const auto c = make_chan(1.0, noise_variance(20.0));
    const auto md = min_distance(t.full_set(1), t.full_set(2));
    EXPECT_EQ(md.pairs, 4u);
    const double approx_ref = 4.0 / 256.0 * q_ref(md.distance / std::sqrt(2 * c.sigma2));
    const double approx = mc_error_prob(t, 1, 2, c, false);
    EXPECT_NEAR(approx, approx_ref, 1e-15);
    const double ratio = mc_error_prob(t, 1, 2, c, true) / approx;
    RecordProperty("exact_over_approx", std::to_string(ratio));
    EXPECT_GE(ratio, 1.0);
    EXPECT_NEAR(ratio, 3.02, 0.01);
}

TEST(Capacity, PerfectSingleModeIsErgodicRate)
{
    const auto t = presets::make_table({{Modulation::qpsk, std::nullopt, 1.0}, {Modulation::qpsk, Modulation::qpsk, 0.8}});
    auto in = CapacityInputs::perfect(2);
    in.priors = {0.0, 1.0};
    for (double snr : {0.0, 10.0, 20.0}) {
        const double a = 0.2 / noise_variance(snr);
        // E[log2(1 + aX)], X ~ Exp(1), is e^{1/a} E1(1/a) / ln 2
        const double ref = std::exp(1 / a) * -std::expint(-1 / a) / std::numbers::ln2;
        EXPECT_NEAR(capacity(t, in, snr, 200000), ref, 0.01 * ref);
    }
}

TEST(Capacity, ZeroNearProbabilityLeavesOnlyOma)
{
    const auto t = presets::case1();
    auto in = CapacityInputs::perfect(4);
    in.q.assign(4, 0.0);
    in.priors = {0.0, 1 / 3.0, 1 / 3.0, 1 / 3.0};
    EXPECT_EQ(capacity(t, in, 10.0, 1000), 0.0);
    in.priors.assign(4, 0.25);
    const double oma = 0.25 * std::exp(0.01) * -std::expint(-0.01) / std::numbers::ln2;
    EXPECT_NEAR(capacity(t, in, 20.0, 200000), oma, 0.01 * oma);
}

TEST(Capacity, MonotoneInCorrectClassification)
{
    const auto t = presets::case1();
    double prev = -1.0;
    for (int k = 0; k <= 10; ++k) {
        const double pll = k / 10.0;
        auto in = CapacityInputs::uniform_priors(4);
        for (int l = 0; l < 4; ++l) {
            in.p[l][l] = pll;
            in.p[l][l % 3 + 1] += 1.0 - pll;
        }
        const double c = capacity(t, in, 20.0, 5000);
        EXPECT_GE(c, prev);
        prev = c;
    }
}

TEST(Capacity, RejectsBadInputs)
{
    const auto t = presets::case1();
    auto in = CapacityInputs::perfect(4);
    in.p[1][1] = 0.5;
    EXPECT_THROW(capacity(t, in, 10.0, 10), std::invalid_argument);
    in = CapacityInputs::perfect(3);
    EXPECT_THROW(capacity(t, in, 10.0, 10), std::invalid_argument);
    in = CapacityInputs::perfect(4);
    in.q[2] = 1.5;
    EXPECT_THROW(capacity(t, in, 10.0, 10), std::invalid_argument);
    EXPECT_THROW(capacity(t, CapacityInputs::perfect(4), 10.0, 0), std::invalid_argument);
}

TEST(TrialRate, Crediting)
{
    const auto t = presets::case1();
    const SinrModel model(t);
    const auto c = make_chan(1.0, 0.1);
    EXPECT_NEAR(trial_rate(model, 0, false, std::nullopt, false, c), std::log2(11.0), 1e-12);
    EXPECT_EQ(trial_rate(model, 0, true, 1, true, c), 0.0);
    EXPECT_EQ(trial_rate(model, 2, false, std::nullopt, false, c), 0.0);
    EXPECT_EQ(trial_rate(model, 2, true, 2, false, c), 0.0);
    EXPECT_NEAR(trial_rate(model, 2, true, 2, true, c), model.rate(2, 2, c), 1e-15);
    EXPECT_NEAR(trial_rate(model, 2, true, 3, true, c), model.rate(2, 3, c), 1e-15);
}
