#ifndef NBSC_MLC_HPP
#define NBSC_MLC_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "channel.hpp"
#include "modset.hpp"

// Maximum-likelihood signal classification: OMA/NOMA, modulation mode (orders
// and power ratio) and near/far UT, plus the single-shot 2L+1 hypothesis test.
// All likelihoods are handled in the log domain.

namespace nbsc {

namespace detail {

/// Terms further than this below the dominant one are dropped; they sit below
/// double resolution of the sum.
inline constexpr double lse_cutoff = 50.0;

/// Points multiplied by a channel gain, stored as separate real and imaginary
/// arrays.
struct ScaledPoints {
    std::vector<double> re;
    std::vector<double> im;

    void assign(std::span<const cplx> pts, cplx h)
    {
        re.resize(pts.size());
        im.resize(pts.size());
        const double hr = h.real();
        const double hi = h.imag();
        for (std::size_t i = 0; i < pts.size(); ++i) {
            re[i] = hr * pts[i].real() - hi * pts[i].imag();
            im[i] = hr * pts[i].imag() + hi * pts[i].real();
        }
    }

    std::size_t size() const noexcept { return re.size(); }
};

/// log((1/|S|) Σ_s exp(−|y − s|²/σ²)) − log(πσ²) over scaled points.
/// `scratch` must hold |S| values.
inline double log_mean_gaussian_scaled(cplx y, const ScaledPoints& hs, double sigma2, double* scratch) noexcept
{
    const std::size_t n = hs.size();
    const double yr = y.real();
    const double yi = y.imag();
    const double* re = hs.re.data();
    const double* im = hs.im.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double dr = yr - re[i];
        const double di = yi - im[i];
        scratch[i] = dr * dr + di * di;
    }
    double m[4] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                   std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        for (std::size_t j = 0; j < 4; ++j) m[j] = scratch[i + j] < m[j] ? scratch[i + j] : m[j];
    for (; i < n; ++i) m[0] = scratch[i] < m[0] ? scratch[i] : m[0];
    const double dmin = std::min(std::min(m[0], m[1]), std::min(m[2], m[3]));

    const double inv = 1.0 / sigma2;
    const double cut = dmin + lse_cutoff * sigma2;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        if (scratch[k] < cut) acc += std::exp((dmin - scratch[k]) * inv);
    return -dmin * inv + std::log(acc / static_cast<double>(n)) - std::log(std::numbers::pi * sigma2);
}

/// Same as above with unscaled points and channel gain `h`.
inline double log_mean_gaussian(cplx y, std::span<const cplx> pts, cplx h, double sigma2)
{
    ScaledPoints hs;
    hs.assign(pts, h);
    std::vector<double> scratch(pts.size());
    return log_mean_gaussian_scaled(y, hs, sigma2, scratch.data());
}

/// Order-independent sum: terms are added in ascending order.
inline double canonical_sum(std::vector<double> terms)
{
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
}

inline double log_sum_exp(std::span<const double> xs) noexcept
{
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : xs) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

inline void require_noise(const ChannelRealization& chan)
{
    if (!(chan.sigma2 > 0.0)) throw std::invalid_argument("likelihood needs a positive noise variance");
}

} // namespace detail

/// log p(y | set) for the Gaussian mixture over `set` seen through ĥ.
inline double log_likelihood(cplx y, const Constellation& set, const ChannelRealization& chan)
{
    detail::require_noise(chan);
    if (set.empty()) throw std::invalid_argument("likelihood over an empty constellation");
    return detail::log_mean_gaussian(y, set.points(), chan.h_est, chan.sigma2);
}

/// p(y | set) = (1/|set|) Σ (1/πσ²) exp(−|y − ĥs|²/σ²).
inline double likelihood(cplx y, const Constellation& set, const ChannelRealization& chan)
{
    return std::exp(log_likelihood(y, set, chan));
}

/// log Γ(y | set) = Σ_k log p(y_k | set), symbols treated as independent.
inline double joint_log_likelihood(std::span<const cplx> ys, const Constellation& set, const ChannelRealization& chan)
{
    if (ys.empty()) throw std::invalid_argument("joint likelihood needs at least one sample");
    detail::require_noise(chan);
    if (set.empty()) throw std::invalid_argument("likelihood over an empty constellation");
    detail::ScaledPoints hs;
    hs.assign(set.points(), chan.h_est);
    std::vector<double> scratch(set.size());
    std::vector<double> terms;
    terms.reserve(ys.size());
    for (const auto& y : ys) terms.push_back(detail::log_mean_gaussian_scaled(y, hs, chan.sigma2, scratch.data()));
    return detail::canonical_sum(std::move(terms));
}

enum class Access { oma, noma };

struct Hypothesis {
    enum class Kind { oma, noma_mode, noma_aggregate, near_mode, far_mode };
    Kind kind = Kind::oma;
    int mode = 0;

    friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

struct LikelihoodTrace {
    double oma = std::numeric_limits<double>::quiet_NaN();
    double noma = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> modes;  // index l-1 holds log Γ(y | ℋ_l)
    double near = std::numeric_limits<double>::quiet_NaN();
    double far = std::numeric_limits<double>::quiet_NaN();
};

struct ClassificationResult {
    Access access = Access::oma;
    std::optional<int> mode;   // set only for NOMA
    std::optional<Role> role;  // near/far, set only for NOMA
    bool role_inferred = false;  // near/far taken from the own-order rule, not tested
    LikelihoodTrace trace;

    bool is_near_noma() const noexcept { return access == Access::noma && role == Role::near; }
};

/// Per-symbol log-likelihoods against every mode's set: entry (k, l) is
/// log p(y_k | χ_l). Every ML step below is a reduction of this matrix, so the
/// expensive part is computed once per frame.
class SymbolScores {
public:
    SymbolScores(std::span<const cplx> ys, const ModeTable& table, const ChannelRealization& chan)
        : SymbolScores(ys, table, chan, nullptr, {})
    {
    }

    /// Copies column l from `prior` wherever `reuse[l]` is set. The caller
    /// guarantees the prior was scored on the same samples, channel and set.
    SymbolScores(std::span<const cplx> ys, const ModeTable& table, const ChannelRealization& chan,
                 const SymbolScores* prior, std::span<const std::uint8_t> reuse)
        : symbols_(ys.size()), modes_(static_cast<std::size_t>(table.size())), ll_(symbols_ * modes_)
    {
        if (ys.empty()) throw std::invalid_argument("classification needs at least one sample");
        detail::require_noise(chan);
        if (prior && (prior->symbols_ != symbols_ || prior->modes_ != modes_ || reuse.size() != modes_))
            throw std::invalid_argument("prior scores do not match");
        detail::ScaledPoints hs;
        std::vector<double> scratch;
        for (std::size_t l = 0; l < modes_; ++l) {
            if (prior && reuse[l]) {
                for (std::size_t k = 0; k < symbols_; ++k) ll_[k * modes_ + l] = prior->ll_[k * modes_ + l];
                continue;
            }
            const auto pts = table.full_set(static_cast<int>(l)).points();
            hs.assign(pts, chan.h_est);
            scratch.resize(pts.size());
            for (std::size_t k = 0; k < symbols_; ++k)
                ll_[k * modes_ + l] = detail::log_mean_gaussian_scaled(ys[k], hs, chan.sigma2, scratch.data());
        }
        weights_.resize(modes_);
        const double n = static_cast<double>(table.noma_point_count());
        for (std::size_t l = 1; l < modes_; ++l)
            weights_[l] = std::log(static_cast<double>(table.full_set(static_cast<int>(l)).size()) / n);
    }

    double mode(int l) const
    {
        std::vector<double> t(symbols_);
        for (std::size_t k = 0; k < symbols_; ++k) t[k] = ll_[k * modes_ + static_cast<std::size_t>(l)];
        return detail::canonical_sum(std::move(t));
    }

    /// log Γ(y | ℋ_N) with 𝒩 the multiset union; the per-symbol union density is
    /// the |χ_l|-weighted mixture of the per-mode densities.
    double noma() const
    {
        std::vector<double> t(symbols_);
        std::vector<double> mix(modes_ - 1);
        for (std::size_t k = 0; k < symbols_; ++k) {
            for (std::size_t l = 1; l < modes_; ++l) mix[l - 1] = ll_[k * modes_ + l] + weights_[l];
            t[k] = detail::log_sum_exp(mix);
        }
        return detail::canonical_sum(std::move(t));
    }

private:
    std::size_t symbols_;
    std::size_t modes_;
    std::vector<double> ll_;
    std::vector<double> weights_;
};

namespace detail {

inline Access decide_oma_noma(const SymbolScores& s, LikelihoodTrace& tr)
{
    tr.oma = s.mode(0);
    tr.noma = s.noma();
    return tr.noma > tr.oma ? Access::noma : Access::oma;
}

inline int decide_mode(const SymbolScores& s, const ModeTable& table, LikelihoodTrace& tr)
{
    tr.modes.assign(static_cast<std::size_t>(table.noma_count()), 0.0);
    int best = 1;
    for (int l = 1; l < table.size(); ++l) {
        tr.modes[static_cast<std::size_t>(l - 1)] = s.mode(l);
        if (tr.modes[static_cast<std::size_t>(l - 1)] > tr.modes[static_cast<std::size_t>(best - 1)]) best = l;
    }
    return best;
}

inline Role decide_near_far(std::span<const cplx> ys, double near_score, int l, const ModeTable& table,
                            const ChannelRealization& chan, LikelihoodTrace& tr)
{
    tr.near = near_score;
    tr.far = joint_log_likelihood(ys, table.far_set(l), chan);
    return tr.far > tr.near ? Role::far : Role::near;
}

} // namespace detail

/// ℋ_0 vs ℋ_N. Ties go to OMA.
inline Access classify_oma_noma(std::span<const cplx> ys, const ModeTable& table, const ChannelRealization& chan)
{
    LikelihoodTrace tr;
    return detail::decide_oma_noma(SymbolScores(ys, table, chan), tr);
}

/// argmax over ℋ_1..ℋ_L; ties go to the lowest mode id.
inline int classify_modulation(std::span<const cplx> ys, const ModeTable& table, const ChannelRealization& chan)
{
    LikelihoodTrace tr;
    return detail::decide_mode(SymbolScores(ys, table, chan), table, tr);
}

/// ℋ_l^n (χ_l) vs ℋ_l^f (χ_l^f) for an already classified mode l. Ties go to near.
inline Role classify_near_far(std::span<const cplx> ys, int l, const ModeTable& table, const ChannelRealization& chan)
{
    if (l < 1 || l >= table.size()) throw std::invalid_argument("near/far undefined for OMA");
    LikelihoodTrace tr;
    return detail::decide_near_far(ys, joint_log_likelihood(ys, table.full_set(l), chan), l, table, chan, tr);
}

/// Role implied by the receiver's own modulation when the far and near orders
/// of mode l differ; empty when the test has to run.
inline std::optional<Role> role_from_own_order(const ModulationMode& mode, Modulation own)
{
    if (mode.is_oma() || !mode.near_mod || *mode.near_mod == mode.far_mod) return std::nullopt;
    if (own == *mode.near_mod) return Role::near;
    if (own == mode.far_mod) return Role::far;
    return std::nullopt;
}

/// OMA/NOMA, then mode, then near/far (skipped when the own order settles it),
/// on precomputed scores of `ys`.
inline ClassificationResult classify_three_step(std::span<const cplx> ys, const SymbolScores& s,
                                                const ModeTable& table, const ChannelRealization& chan,
                                                Modulation own_order)
{
    ClassificationResult r;
    r.access = detail::decide_oma_noma(s, r.trace);
    if (r.access == Access::oma) return r;

    const int l = detail::decide_mode(s, table, r.trace);
    r.mode = l;
    if (auto inferred = role_from_own_order(table.mode(l), own_order)) {
        r.role = *inferred;
        r.role_inferred = true;
        return r;
    }
    r.role = detail::decide_near_far(ys, r.trace.modes[static_cast<std::size_t>(l - 1)], l, table, chan, r.trace);
    return r;
}

inline ClassificationResult classify_three_step(std::span<const cplx> ys, const ModeTable& table,
                                                const ChannelRealization& chan, Modulation own_order)
{
    return classify_three_step(ys, SymbolScores(ys, table, chan), table, chan, own_order);
}

/// Single argmax over {ℋ_0, ℋ_1^f..ℋ_L^f, ℋ_1^n..ℋ_L^n}; ties go to the
/// earliest hypothesis in that order.
inline Hypothesis classify_joint(std::span<const cplx> ys, const ModeTable& table, const ChannelRealization& chan)
{
    const SymbolScores s(ys, table, chan);
    Hypothesis best{Hypothesis::Kind::oma, 0};
    double best_score = s.mode(0);
    for (int l = 1; l < table.size(); ++l) {
        const double v = joint_log_likelihood(ys, table.far_set(l), chan);
        if (v > best_score) {
            best_score = v;
            best = {Hypothesis::Kind::far_mode, l};
        }
    }
    for (int l = 1; l < table.size(); ++l) {
        const double v = s.mode(l);
        if (v > best_score) {
            best_score = v;
            best = {Hypothesis::Kind::near_mode, l};
        }
    }
    return best;
}

/// Mode table whose mode-l constellations are rotated by θ_l, for both the
/// transmitter and the likelihoods.
inline ModeTable build_prm_table(const ModeTable& table, std::span<const double> thetas)
{
    return table.with_data_rotations(thetas);
}

/// Θ = {θ_0, 0, ..., 0}: only the OMA constellation is rotated.
inline std::vector<double> oma_only_rotation(const ModeTable& table, double theta0)
{
    std::vector<double> t(static_cast<std::size_t>(table.size()), 0.0);
    t[0] = theta0;
    return t;
}

} // namespace nbsc

#endif // NBSC_MLC_HPP
