#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "nbsc/prc.hpp"
#include "nbsc/presets.hpp"
#include "nbsc/receiver.hpp"

using namespace nbsc;
using std::numbers::pi;

namespace {

ChannelRealization make_chan(cplx h, double sigma2)
{
    ChannelRealization c;
    c.h = c.h_est = h;
    c.sigma2 = sigma2;
    return c;
}

void expect_partition(const PhasePlan& plan)
{
    const auto r = plan.regions();
    double total = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        total += r[i].width;
        const auto& next = r[(i + 1) % r.size()];
        EXPECT_NEAR(circular_distance(r[i].begin + r[i].width, next.begin), 0.0, 1e-12);
    }
    EXPECT_NEAR(total, two_pi, 1e-12);
    // every probe angle lands in exactly one arc
    for (int k = 0; k < 3600; ++k) {
        const double phi = two_pi * (k + 0.5) / 3600;
        int hits = 0;
        for (const auto& reg : r) hits += wrap_angle(phi - reg.begin) < reg.width;
        EXPECT_EQ(hits, 1) << phi;
    }
}

// Δ^f and Δ^n by direct enumeration of the co-user pilot
std::pair<double, double> brute_deltas(cplx y, const ModulationMode& m, cplx h, cplx own)
{
    double df = 1e300, dn = 1e300;
    const double a = 1.0 / std::numbers::sqrt2;
    for (double re : {-a, a})
        for (double im : {-a, a}) {
            const cplx q{re, im};
            df = std::min(df, std::abs(y - h * (std::sqrt(m.power_far) * own + std::sqrt(m.power_near) * q)));
            dn = std::min(dn, std::abs(y - h * (std::sqrt(m.power_near) * own + std::sqrt(m.power_far) * q)));
        }
    return {df, dn};
}

} // namespace

TEST(AssignUniform, Case1)
{
    const auto plan = assign_uniform(presets::case1());
    const auto phi = plan.rotations();
    ASSERT_EQ(phi.size(), 4u);
    EXPECT_EQ(phi[0], 0.0);
    EXPECT_NEAR(phi[1], pi / 2, 1e-15);
    EXPECT_NEAR(phi[2], pi, 1e-15);
    EXPECT_NEAR(phi[3], 3 * pi / 2, 1e-15);
    EXPECT_EQ(plan.rule(), PhaseRule::uniform);
    expect_partition(plan);
}

TEST(AssignUniform, Case2)
{
    const auto plan = assign_uniform(presets::case2());
    const auto phi = plan.rotations();
    ASSERT_EQ(phi.size(), 3u);
    EXPECT_EQ(phi[0], 0.0);
    EXPECT_NEAR(phi[1], 2 * pi / 3, 1e-15);
    EXPECT_NEAR(phi[2], 4 * pi / 3, 1e-15);
}

TEST(AssignUniform, EachRotationInOwnRegion)
{
    for (const auto& t : {presets::case1(), presets::case2(), presets::case3()}) {
        const auto plan = assign_uniform(t);
        expect_partition(plan);
        for (int l = 0; l < t.size(); ++l) {
            const auto& reg = plan.regions()[plan.region_of(plan.rotations()[l])];
            if (l == 0) {
                EXPECT_FALSE(reg.group.has_value());
            } else {
                ASSERT_TRUE(reg.group.has_value());
                const auto& g = plan.groups()[*reg.group];
                EXPECT_GE(l, g.first);
                EXPECT_LE(l, g.last);
            }
            const auto d = classify_prc(plan.rotations()[l], plan);
            EXPECT_EQ(d.access, l == 0 ? Access::oma : Access::noma);
            if (l > 0) {
                EXPECT_EQ(d.mode, l);
            }
        }
    }
}

TEST(AssignNonuniform, Case3DefaultWeights)
{
    const auto plan = assign_nonuniform(presets::case3());
    const auto phi = plan.rotations();
    const auto r = plan.regions();
    ASSERT_EQ(r.size(), 3u);
    for (const auto& reg : r) EXPECT_NEAR(reg.width, 2 * pi / 3, 1e-12);
    EXPECT_NEAR(r[1].begin, pi / 3, 1e-15);
    EXPECT_NEAR(r[1].begin + r[1].width, pi, 1e-12);
    EXPECT_EQ(phi[0], 0.0);
    EXPECT_NEAR(phi[1], pi / 3, 1e-15);
    EXPECT_NEAR(phi[2], pi / 3 + 2 * pi / 9, 1e-15);
    EXPECT_NEAR(phi[3], pi / 3 + 4 * pi / 9, 1e-15);
    EXPECT_NEAR(phi[4], pi, 1e-15);
    EXPECT_NEAR(phi[5], pi + pi / 3, 1e-15);
    expect_partition(plan);
    for (int l = 0; l < 6; ++l) {
        const auto d = classify_prc(phi[l], plan);
        if (l == 0) {
            EXPECT_EQ(d.access, Access::oma);
        } else {
            EXPECT_EQ(d.mode, l);
        }
    }
}

TEST(AssignNonuniform, QuarterPiArcWorkedExample)
{
    using enum Modulation;
    const auto t = presets::make_table(
        {{qpsk, std::nullopt, 1.0}, {qpsk, qpsk, 0.8}, {qpsk, qpsk, 0.86}, {qpsk, qpsk, 0.92}, {qam16, qam16, 0.95}});
    RegionWeights w;
    w.oma = pi / 2;
    w.qpsk = pi / 2;
    w.qam16 = pi;
    const auto plan = assign_nonuniform(t, w);
    EXPECT_NEAR(plan.regions()[1].begin, pi / 4, 1e-15);
    EXPECT_NEAR(plan.regions()[1].width, pi / 2, 1e-15);
    EXPECT_NEAR(plan.rotations()[1], pi / 4, 1e-15);
    EXPECT_NEAR(plan.rotations()[2], pi / 4 + pi / 6, 1e-15);
    EXPECT_NEAR(plan.rotations()[3], pi / 4 + pi / 3, 1e-15);
    expect_partition(plan);
}

TEST(AssignNonuniform, RejectsBadWeights)
{
    const auto t = presets::case3();
    auto w = default_region_weights(t);
    EXPECT_EQ(w.qam64, 0.0);
    w.qam64 = 0.1;
    w.oma -= 0.1;
    EXPECT_THROW(assign_nonuniform(t, w), std::invalid_argument);
    w = default_region_weights(t);
    w.oma += 0.1;
    EXPECT_THROW(assign_nonuniform(t, w), std::invalid_argument);
    w = default_region_weights(t);
    w.oma += w.qam16;
    w.qam16 = 0.0;
    EXPECT_THROW(assign_nonuniform(t, w), std::invalid_argument);
}

TEST(PhasePlan, RejectsBadRegions)
{
    const auto t = presets::case1();
    const auto g = t.far_groups();
    EXPECT_THROW(PhasePlan(PhaseRule::uniform, {0, 1, 2, 3}, {{0, 0.0, two_pi}}, {g.begin(), g.end()}),
                 std::invalid_argument);
    EXPECT_THROW(PhasePlan(PhaseRule::uniform, {0, 1, 2, 3}, {{std::nullopt, 0.0, 1.0}, {0, 1.0, 1.0}},
                           {g.begin(), g.end()}),
                 std::invalid_argument);
}

TEST(ClassifyPrc, BoundaryBelongsToArcStartingThere)
{
    const auto plan = assign_uniform(presets::case1());
    // OMA arc is [-π/4, π/4); π/4 opens the NOMA arc
    EXPECT_EQ(classify_prc(pi / 4, plan).access, Access::noma);
    EXPECT_EQ(classify_prc(std::nextafter(pi / 4, 0.0) - 1e-11, plan).access, Access::oma);
    EXPECT_EQ(classify_prc(7 * pi / 4, plan).access, Access::oma);
    // equidistant from φ_1 and φ_2: lower id
    EXPECT_EQ(classify_prc(3 * pi / 4, plan).mode, 1);
}

TEST(ClassifyPrc, NearestRotation)
{
    const auto plan = assign_uniform(presets::case1());
    const auto d = classify_prc(pi / 2 + 0.1, plan);
    EXPECT_EQ(d.access, Access::noma);
    EXPECT_EQ(d.mode, 1);
    EXPECT_EQ(classify_prc(pi - 0.2, plan).mode, 2);
    EXPECT_EQ(classify_prc(3 * pi / 2 + 0.3, plan).mode, 3);
    EXPECT_EQ(classify_prc(two_pi - 0.3, plan).access, Access::oma);
}

TEST(EstimateRotation, NoiselessExact)
{
    const auto chan = make_chan({0.6, -0.9}, 0.0);
    const cplx p{0.3, 0.8};
    const cplx ru = chan.h * p;
    EXPECT_DOUBLE_EQ(estimate_rotation(ru, ru * std::polar(1.0, pi / 2)), pi / 2);
    EXPECT_THROW(estimate_rotation({0, 0}, {1, 0}), std::invalid_argument);
}

TEST(EstimateRotation, IndependentOfChannelAndPilot)
{
    const double phi = 2.1;
    double ref = -1;
    for (int i = 0; i < 50; ++i) {
        const cplx h = std::polar(0.1 + 0.05 * i, 0.37 * i);
        const cplx p = std::polar(0.5 + 0.01 * i, -0.11 * i);
        const double e = estimate_rotation(h * p, h * p * std::polar(1.0, phi));
        if (ref < 0) ref = e;
        EXPECT_NEAR(e, phi, 1e-14);
        EXPECT_NEAR(e, ref, 1e-14);
    }
}

TEST(EstimateRotation, NoiselessAllModesAllCases)
{
    for (const auto& base : {presets::case1(), presets::case2(), presets::case3()}) {
        for (const auto& plan : {assign_uniform(base), assign_nonuniform(base)}) {
            const auto t = apply_plan(base, plan);
            for (int l = 0; l < t.size(); ++l) {
                Rng rng(static_cast<std::uint64_t>(l));
                const auto chan = make_chan(std::polar(1.3, 0.7 * l + 0.2), 0.0);
                const auto p = transmit_pilots(t.mode(l), chan, rng);
                EXPECT_LT(circular_distance(estimate_rotation(p.unrotated, p.rotated), t.mode(l).pilot_rotation), 1e-14);
            }
        }
    }
}

TEST(EstimateRotation, UnbiasedAt10dB)
{
    const auto t = presets::case1();
    cplx acc{};
    for (std::uint64_t i = 0; i < 10000; ++i) {
        Rng rng = substream(21, 10, i);
        const auto chan = sample_channel(rng, 10.0);
        const auto p = transmit_pilots(t.mode(2), chan, rng);
        acc += std::polar(1.0, estimate_rotation(p.unrotated, p.rotated));
    }
    EXPECT_LT(circular_distance(std::arg(acc), t.mode(2).pilot_rotation), 0.02);
}

TEST(Derotate, Cases)
{
    const auto t = presets::case1();
    const cplx ru{0.4, -0.7};
    const cplx rr = ru * std::polar(1.0, t.mode(2).pilot_rotation);
    EXPECT_NEAR(std::abs(derotate_pilot(rr, 2, t) - ru), 0.0, 1e-15);
    const cplx wrong = derotate_pilot(rr, 3, t);
    EXPECT_NEAR(circular_distance(estimate_rotation(ru, wrong), t.mode(2).pilot_rotation - t.mode(3).pilot_rotation),
                0.0, 1e-14);
    EXPECT_EQ(derotate_pilot(rr, 0, t), rr);
}

TEST(NearFarPrc, DistancesMatchBruteForce)
{
    const PilotScheme ps;
    for (const auto& t : {presets::case1(), presets::case3()}) {
        for (int l = 1; l < t.size(); ++l) {
            for (int k = 0; k < 20; ++k) {
                const auto chan = make_chan(std::polar(0.9, 0.3 * k), 0.1);
                const cplx y{0.1 * k - 1.0, 0.5 - 0.05 * k};
                const auto d = near_far_distances(y, l, t, chan, ps.near, ps.alphabet);
                const auto [df, dn] = brute_deltas(y, t.mode(l), chan.h, ps.near);
                EXPECT_NEAR(d.far, df, 1e-13);
                EXPECT_NEAR(d.near, dn, 1e-13);
            }
        }
    }
    EXPECT_THROW(near_far_distances({1, 0}, 0, presets::case1(), make_chan({1, 0}, 1), ps.near, ps.alphabet),
                 std::invalid_argument);
}

TEST(NearFarPrc, NoiselessDecisionsOverChannelPhase)
{
    const PilotScheme ps;
    for (const auto& t : {presets::case1(), presets::case2(), presets::case3()}) {
        for (int l = 1; l < t.size(); ++l) {
            const cplx pu = transmitted_pilot(t.mode(l), ps);
            for (int k = 0; k < 100; ++k) {
                const auto chan = make_chan(std::polar(1.0, two_pi * k / 100), 1e-9);
                const cplx y = chan.h * pu;
                const auto dn = near_far_distances(y, l, t, chan, ps.near, ps.alphabet);
                EXPECT_NEAR(dn.near, 0.0, 1e-12);
                EXPECT_GT(dn.far, 0.0);
                EXPECT_EQ(classify_near_far_prc(y, l, t, chan, ps.near, ps.alphabet), Role::near);
                const auto df = near_far_distances(y, l, t, chan, ps.far, ps.alphabet);
                EXPECT_NEAR(df.far, 0.0, 1e-12);
                EXPECT_EQ(classify_near_far_prc(y, l, t, chan, ps.far, ps.alphabet), Role::far);
            }
        }
    }
}

TEST(NearFarPrc, InvariantToGlobalPhase)
{
    const auto t = presets::case1();
    const PilotScheme ps;
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const auto chan = sample_channel(rng, 5.0);
        const cplx y = chan.h * transmitted_pilot(t.mode(1), ps) + std::sqrt(chan.sigma2) * complex_normal(rng);
        const auto base = near_far_distances(y, 1, t, chan, ps.near, ps.alphabet);
        for (int k = 1; k < 12; ++k) {
            const cplx rot = std::polar(1.0, two_pi * k / 12);
            auto c2 = chan;
            c2.h = c2.h_est = chan.h * rot;
            const auto d = near_far_distances(y * rot, 1, t, c2, ps.near, ps.alphabet);
            EXPECT_NEAR(d.far, base.far, 1e-12);
            EXPECT_NEAR(d.near, base.near, 1e-12);
            EXPECT_EQ(classify_near_far_prc(y * rot, 1, t, c2, ps.near, ps.alphabet),
                      classify_near_far_prc(y, 1, t, chan, ps.near, ps.alphabet));
        }
    }
}

TEST(PilotReuse, NoiselessFullPipeline)
{
    const PilotScheme ps;
    for (const auto& base : {presets::case1(), presets::case2(), presets::case3()}) {
        for (const auto& plan : {assign_uniform(base), assign_nonuniform(base)}) {
            const auto t = apply_plan(base, plan);
            for (int l = 0; l < t.size(); ++l) {
                for (Role role : {Role::near, Role::far}) {
                    const auto chan = make_chan(std::polar(0.8, 0.9 * l + 0.1), 1e-9);
                    const cplx pu = transmitted_pilot(t.mode(l), ps);
                    const cplx ru = chan.h * pu;
                    const cplx rr = ru * std::polar(1.0, t.mode(l).pilot_rotation);
                    const auto own = own_order(t.mode(l), role);
                    const cplx own_pilot = l == 0 ? ps.oma : ps.own(role);
                    const auto r = classify_pilot_reuse(ru, rr, t, plan, chan, own, own_pilot, ps.alphabet);
                    if (l == 0) {
                        EXPECT_EQ(r.access, Access::oma);
                        continue;
                    }
                    EXPECT_EQ(r.access, Access::noma);
                    EXPECT_EQ(r.mode, l);
                    EXPECT_EQ(r.role, role) << l << " " << plan.regions().size() << " " << role_name(role);
                    EXPECT_EQ(r.role_inferred, t.mode(l).near_mod != t.mode(l).far_mod);
                }
            }
        }
    }
}

TEST(PilotReuse, ApplyPlanCarriesRotations)
{
    const auto base = presets::case3();
    const auto plan = assign_nonuniform(base);
    const auto t = apply_plan(base, plan);
    for (int l = 0; l < t.size(); ++l) EXPECT_EQ(t.mode(l).pilot_rotation, wrap_angle(plan.rotations()[l]));
}
