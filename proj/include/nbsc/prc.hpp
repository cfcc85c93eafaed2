#ifndef NBSC_PRC_HPP
#define NBSC_PRC_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "channel.hpp"
#include "mlc.hpp"
#include "modset.hpp"

// Pilot reuse-based classification. The second of two identical pilots is
// rotated by a mode-specific φ_l; the receiver estimates the rotation and maps
// it to OMA/NOMA and the mode through a partition of the circle.

namespace nbsc {

enum class PhaseRule { uniform, nonuniform };

/// Arc widths in radians for the non-uniform rule. A far-order entry must be
/// zero exactly when the table has no mode with that far modulation.
struct RegionWeights {
    double oma = 0.0;
    double qpsk = 0.0;
    double qam16 = 0.0;
    double qam64 = 0.0;

    double for_far(Modulation m) const noexcept
    {
        switch (m) {
        case Modulation::qpsk: return qpsk;
        case Modulation::qam16: return qam16;
        case Modulation::qam64: return qam64;
        }
        return 0.0;
    }
};

/// One decision arc [begin, begin + width). `group` indexes the table's far
/// groups; empty for Φ_O.
struct PhaseRegion {
    std::optional<std::size_t> group;
    double begin = 0.0;
    double width = 0.0;
};

class PhasePlan {
public:
    PhasePlan(PhaseRule rule, std::vector<double> rotations, std::vector<PhaseRegion> regions,
              std::vector<ModeTable::FarGroup> groups)
        : rule_(rule), rotations_(std::move(rotations)), regions_(std::move(regions)), groups_(std::move(groups))
    {
        if (regions_.empty() || regions_.front().group)
            throw std::invalid_argument("phase plan must start with the OMA region");
        double sum = 0.0;
        offsets_.push_back(0.0);
        for (const auto& r : regions_) {
            if (!(r.width > 0.0)) throw std::invalid_argument("phase regions must have positive width");
            sum += r.width;
            offsets_.push_back(sum);
        }
        if (std::abs(sum - two_pi) > 1e-9) throw std::invalid_argument("phase regions must cover the full circle");
        offsets_.back() = two_pi;
    }

    PhaseRule rule() const noexcept { return rule_; }
    std::span<const double> rotations() const noexcept { return rotations_; }
    std::span<const PhaseRegion> regions() const noexcept { return regions_; }
    std::span<const ModeTable::FarGroup> groups() const noexcept { return groups_; }
    const PhaseRegion& oma_region() const noexcept { return regions_.front(); }

    /// Index into regions() of the arc holding `phi`. An angle on a boundary
    /// belongs to the arc that starts there.
    std::size_t region_of(double phi) const noexcept
    {
        constexpr double snap = 1e-12;
        const double x = wrap_angle(phi - regions_.front().begin);
        for (std::size_t i = regions_.size(); i-- > 0;)
            if (x >= offsets_[i] - snap) return i;
        return 0;
    }

private:
    PhaseRule rule_;
    std::vector<double> rotations_;
    std::vector<PhaseRegion> regions_;
    std::vector<ModeTable::FarGroup> groups_;
    std::vector<double> offsets_;
};

/// φ_l = 2πl/(L+1); every mode owns an arc of width 2π/(L+1) centred on φ_l.
inline PhasePlan assign_uniform(const ModeTable& table)
{
    const int n = table.size();
    const double w = two_pi / n;
    std::vector<double> phi(static_cast<std::size_t>(n));
    for (int l = 0; l < n; ++l) phi[static_cast<std::size_t>(l)] = w * l;

    std::vector<PhaseRegion> regions{{std::nullopt, wrap_angle(-w / 2.0), w}};
    const auto groups = table.far_groups();
    for (std::size_t g = 0; g < groups.size(); ++g)
        regions.push_back({g, phi[static_cast<std::size_t>(groups[g].first)] - w / 2.0, w * groups[g].count()});
    return PhasePlan(PhaseRule::uniform, std::move(phi), std::move(regions), {groups.begin(), groups.end()});
}

/// Equal arcs for Φ_O and every far modulation present in the table.
inline RegionWeights default_region_weights(const ModeTable& table)
{
    const auto groups = table.far_groups();
    const double w = two_pi / static_cast<double>(groups.size() + 1);
    RegionWeights rw;
    rw.oma = w;
    for (const auto& g : groups) {
        switch (g.far_mod) {
        case Modulation::qpsk: rw.qpsk = w; break;
        case Modulation::qam16: rw.qam16 = w; break;
        case Modulation::qam64: rw.qam64 = w; break;
        }
    }
    return rw;
}

/// Φ_O centred on 0, then one arc per far modulation in table order. Inside an
/// arc of width W holding L_i modes, rotations start at the lower edge with
/// step W/L_i.
inline PhasePlan assign_nonuniform(const ModeTable& table, const RegionWeights& weights)
{
    const auto groups = table.far_groups();
    for (Modulation m : {Modulation::qpsk, Modulation::qam16, Modulation::qam64}) {
        const bool present = std::any_of(groups.begin(), groups.end(), [m](const auto& g) { return g.far_mod == m; });
        const double w = weights.for_far(m);
        if (w < 0.0 || (present && w == 0.0))
            throw std::invalid_argument(std::string("region weight for ") + modulation_name(m) + " must be positive");
        if (!present && w != 0.0)
            throw std::invalid_argument(std::string("region weight for absent far modulation ") + modulation_name(m) +
                                        " must be zero");
    }
    if (!(weights.oma > 0.0)) throw std::invalid_argument("OMA region weight must be positive");
    const double total = weights.oma + weights.qpsk + weights.qam16 + weights.qam64;
    if (std::abs(total - two_pi) > 1e-9) throw std::invalid_argument("region weights must sum to 2π");

    std::vector<double> phi(static_cast<std::size_t>(table.size()), 0.0);
    std::vector<PhaseRegion> regions{{std::nullopt, wrap_angle(-weights.oma / 2.0), weights.oma}};
    double edge = weights.oma / 2.0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double w = weights.for_far(groups[g].far_mod);
        const double step = w / groups[g].count();
        for (int l = groups[g].first; l <= groups[g].last; ++l)
            phi[static_cast<std::size_t>(l)] = edge + step * (l - groups[g].first);
        regions.push_back({g, edge, w});
        edge += w;
    }
    return PhasePlan(PhaseRule::nonuniform, std::move(phi), std::move(regions), {groups.begin(), groups.end()});
}

inline PhasePlan assign_nonuniform(const ModeTable& table)
{
    return assign_nonuniform(table, default_region_weights(table));
}

/// Copy of `table` carrying the plan's pilot rotations.
inline ModeTable apply_plan(const ModeTable& table, const PhasePlan& plan)
{
    return table.with_pilot_rotations(plan.rotations());
}

/// ∠(r_u* · r_r) in [0, 2π).
inline double estimate_rotation(cplx r_u, cplx r_r)
{
    if (r_u == cplx{}) throw std::invalid_argument("degenerate pilot");
    return wrap_angle(std::arg(std::conj(r_u) * r_r));
}

/// Shorter-arc distance between two angles.
inline double circular_distance(double a, double b) noexcept
{
    const double d = wrap_angle(a - b);
    return std::min(d, two_pi - d);
}

struct PrcDecision {
    Access access = Access::oma;
    std::optional<int> mode;
};

/// OMA/NOMA and mode in one pass: locate the arc holding φ̂, then pick the
/// nearest rotation among that far group's modes (ties to the lower id).
inline PrcDecision classify_prc(double phi_hat, const PhasePlan& plan)
{
    const auto& region = plan.regions()[plan.region_of(phi_hat)];
    if (!region.group) return {Access::oma, std::nullopt};
    const auto& g = plan.groups()[*region.group];
    int best = g.first;
    double best_d = circular_distance(phi_hat, plan.rotations()[static_cast<std::size_t>(g.first)]);
    for (int l = g.first + 1; l <= g.last; ++l) {
        const double d = circular_distance(phi_hat, plan.rotations()[static_cast<std::size_t>(l)]);
        if (d < best_d) {
            best_d = d;
            best = l;
        }
    }
    return {Access::noma, best};
}

/// r_r·e^{−jφ_l̂} using the table value of the decided mode.
inline cplx derotate_pilot(cplx r_r, int l, const ModeTable& table)
{
    return r_r * std::polar(1.0, -table.mode(l).pilot_rotation);
}

struct NearFarDistances {
    double far = 0.0;   // Δ^f
    double near = 0.0;  // Δ^n
};

/// Residual distances of the two hypotheses for a received pilot `y` of mode l.
/// Under "far" the own pilot p⁰ carries √P_f and the unknown co-user pilot
/// carries √P_n; under "near" the weights swap. The unknown pilot ranges over
/// the pilot alphabet.
inline NearFarDistances near_far_distances(cplx y, int l, const ModeTable& table, const ChannelRealization& chan,
                                           cplx own_pilot, const Constellation& alphabet)
{
    const auto& m = table.mode(l);
    if (m.is_oma()) throw std::invalid_argument("near/far undefined for OMA");
    const double sf = std::sqrt(m.power_far);
    const double sn = std::sqrt(m.power_near);
    const cplx a_f = y - chan.h_est * sf * own_pilot;
    const cplx a_n = y - chan.h_est * sn * own_pilot;
    NearFarDistances d{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    for (const auto& q : alphabet.points()) {
        d.far = std::min(d.far, std::abs(a_f - chan.h_est * sn * q));
        d.near = std::min(d.near, std::abs(a_n - chan.h_est * sf * q));
    }
    return d;
}

/// Near iff Δ^f ≥ Δ^n. Distances equal up to rounding count as a tie, which
/// happens whenever the closest candidate puts the own pilot in both slots.
inline Role classify_near_far_prc(cplx y, int l, const ModeTable& table, const ChannelRealization& chan,
                                  cplx own_pilot, const Constellation& alphabet)
{
    const auto d = near_far_distances(y, l, table, chan, own_pilot, alphabet);
    return d.far >= d.near - 1e-12 * (d.far + d.near) ? Role::near : Role::far;
}

/// Full pilot-based pipeline on one pilot pair: rotation estimate, region
/// decision, then near/far from the unrotated pilot unless the own modulation
/// settles it.
inline ClassificationResult classify_pilot_reuse(cplx r_u, cplx r_r, const ModeTable& table, const PhasePlan& plan,
                                                 const ChannelRealization& chan, Modulation own_order, cplx own_pilot,
                                                 const Constellation& alphabet)
{
    ClassificationResult r;
    const auto d = classify_prc(estimate_rotation(r_u, r_r), plan);
    r.access = d.access;
    if (d.access == Access::oma) return r;
    r.mode = d.mode;
    if (auto inferred = role_from_own_order(table.mode(*d.mode), own_order)) {
        r.role = *inferred;
        r.role_inferred = true;
        return r;
    }
    r.role = classify_near_far_prc(r_u, *d.mode, table, chan, own_pilot, alphabet);
    return r;
}

} // namespace nbsc

#endif // NBSC_PRC_HPP
