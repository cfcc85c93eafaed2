#ifndef NBSC_ANALYSIS_HPP
#define NBSC_ANALYSIS_HPP

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
#include "rng.hpp"

// SINR of the near UT after SIC under correct and wrong modulation
// classification, the ergodic capacity with classification errors, and the
// pairwise classification error probability.

namespace nbsc {

/// Gaussian tail probability Q(x) = P(N(0,1) > x).
inline double q_function(double x) noexcept { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

/// How the receiver's regenerated far symbol ŝ_f is paired with the
/// transmitted one when the decided mode differs from the true mode.
enum class SicPolicy {
    matched_index,  // same index when the far orders agree, nearest point otherwise
    nearest,        // always the nearest point of the decided far set
};

namespace detail {

inline std::size_t nearest_index(std::span<const cplx> pts, cplx x) noexcept
{
    std::size_t best = 0;
    double bd = std::norm(x - pts[0]);
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double d = std::norm(x - pts[i]);
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

/// Mean of |a_i − b_{π(i)}|² over a, where π pairs by index when `by_index`
/// and to the nearest point of b otherwise.
inline double mean_pair_error(const Constellation& a, const Constellation& b, bool by_index)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const cplx t = by_index ? b.points()[i] : b.points()[nearest_index(b.points(), a.points()[i])];
        s += std::norm(a.points()[i] - t);
    }
    return s / static_cast<double>(a.size());
}

} // namespace detail

/// E_i[|s_{f,l}(i) − ŝ_f|²] and E_k[|s_{n,l}(k) − s_{n,m}(k)|²] for true mode l
/// decided as m, both NOMA.
struct InterferenceTerms {
    double far = 0.0;
    double near = 0.0;

    double total() const noexcept { return far + near; }
};

inline InterferenceTerms interference_terms(const ModeTable& table, int l, int m,
                                            SicPolicy policy = SicPolicy::matched_index)
{
    if (l < 1 || m < 1 || l >= table.size() || m >= table.size())
        throw std::invalid_argument("interference terms need two NOMA modes");
    if (l == m) return {};
    const auto& ml = table.mode(l);
    const auto& mm = table.mode(m);
    const bool far_match = policy == SicPolicy::matched_index && ml.far_mod == mm.far_mod;
    const bool near_match = *ml.near_mod == *mm.near_mod;
    return {detail::mean_pair_error(table.far_set(l), table.far_set(m), far_match),
            detail::mean_pair_error(table.near_set(l), table.near_set(m), near_match)};
}

/// η_{l→l} = P_n|h|²/σ².
inline double sinr_correct(const ModulationMode& mode, const ChannelRealization& chan)
{
    return mode.power_near / chan.effective_noise();
}

/// η_{l→m} = P_{n,m} / (E_i + E_k + σ̃²).
inline double sinr_misclassified(const ModeTable& table, int l, int m, const ChannelRealization& chan,
                                 SicPolicy policy = SicPolicy::matched_index)
{
    return table.mode(m).power_near / (interference_terms(table, l, m, policy).total() + chan.effective_noise());
}

/// P_{n,l}(E_i + E_k + σ̃²) ≥ P_{n,m}σ̃², i.e. correct classification is at
/// least as good as deciding m.
inline bool sinr_condition(const ModeTable& table, int l, int m, const ChannelRealization& chan,
                           SicPolicy policy = SicPolicy::matched_index)
{
    const double s = chan.effective_noise();
    const double e = interference_terms(table, l, m, policy).total();
    return table.mode(l).power_near * (e + s) >= table.mode(m).power_near * s;
}

struct SinrReport {
    std::vector<double> eta_correct;                   // η_{l→l}, index l (0 for OMA)
    std::vector<std::vector<double>> eta_mis;          // η_{l→m}, zero whenever l or m is OMA
    std::vector<std::vector<InterferenceTerms>> terms;
};

/// Rate model for one table: interference terms are channel-independent and
/// computed once; η and rates are then cheap per channel draw.
class SinrModel {
public:
    explicit SinrModel(const ModeTable& table, SicPolicy policy = SicPolicy::matched_index)
        : n_(static_cast<std::size_t>(table.size())), power_near_(n_), terms_(n_ * n_)
    {
        for (std::size_t l = 0; l < n_; ++l) power_near_[l] = table.mode(static_cast<int>(l)).power_near;
        for (int l = 1; l < table.size(); ++l)
            for (int m = 1; m < table.size(); ++m)
                terms_[static_cast<std::size_t>(l) * n_ + static_cast<std::size_t>(m)] =
                    interference_terms(table, l, m, policy);
    }

    std::size_t size() const noexcept { return n_; }
    const InterferenceTerms& terms(int l, int m) const
    {
        return terms_.at(static_cast<std::size_t>(l) * n_ + static_cast<std::size_t>(m));
    }

    /// η_{l→m}; zero when exactly one of l, m is OMA. η_{0→0} is the
    /// single-user SNR |h|²/σ².
    double eta(int l, int m, const ChannelRealization& chan) const
    {
        const double s = chan.effective_noise();
        if (l == 0 && m == 0) return 1.0 / s;
        if (l == 0 || m == 0) return 0.0;
        return power_near_[static_cast<std::size_t>(m)] / (terms(l, m).total() + s);
    }

    double rate(int l, int m, const ChannelRealization& chan) const { return std::log2(1.0 + eta(l, m, chan)); }

    SinrReport report(const ChannelRealization& chan) const
    {
        SinrReport r;
        r.eta_correct.resize(n_);
        r.eta_mis.assign(n_, std::vector<double>(n_, 0.0));
        r.terms.assign(n_, std::vector<InterferenceTerms>(n_));
        for (std::size_t l = 0; l < n_; ++l) {
            r.eta_correct[l] = l == 0 ? 0.0 : power_near_[l] / chan.effective_noise();
            for (std::size_t m = 0; m < n_; ++m) {
                if (l == 0 || m == 0) continue;
                r.eta_mis[l][m] = eta(static_cast<int>(l), static_cast<int>(m), chan);
                r.terms[l][m] = terms_[l * n_ + m];
            }
        }
        return r;
    }

private:
    std::size_t n_;
    std::vector<double> power_near_;
    std::vector<InterferenceTerms> terms_;
};

inline SinrReport sinr_report(const ModeTable& table, const ChannelRealization& chan,
                              SicPolicy policy = SicPolicy::matched_index)
{
    return SinrModel(table, policy).report(chan);
}

/// Probability that a χ_l symbol is taken for a χ_m symbol. `exact` sums the
/// pairwise Q terms over all (i, k); otherwise only the N_min pairs at d_min
/// are kept.
inline double mc_error_prob(const ModeTable& table, int l, int m, const ChannelRealization& chan, bool exact)
{
    if (!(chan.sigma2 > 0.0)) throw std::invalid_argument("error probability needs a positive noise variance");
    const auto& a = table.full_set(l);
    const auto& b = table.full_set(m);
    const double scale = std::abs(chan.h) / std::sqrt(2.0 * chan.sigma2);
    const double pairs = static_cast<double>(a.size()) * static_cast<double>(b.size());
    if (!exact) {
        const auto md = min_distance(a, b);
        return static_cast<double>(md.pairs) / pairs * q_function(scale * md.distance);
    }
    std::vector<double> terms;
    terms.reserve(a.size() * b.size());
    for (const auto& s : a.points())
        for (const auto& t : b.points()) terms.push_back(q_function(scale * std::abs(s - t)));
    std::sort(terms.begin(), terms.end());
    double sum = 0.0;
    for (double t : terms) sum += t;
    return sum / pairs;
}

/// Capacity inputs: priors π_l, classification matrix p_{l→m} over
/// {OMA, 1..L}, and per decided NOMA mode the probability q_m of a correct
/// near decision (q_0 is ignored).
struct CapacityInputs {
    std::vector<double> priors;
    std::vector<std::vector<double>> p;
    std::vector<double> q;

    static CapacityInputs uniform_priors(std::size_t modes)
    {
        CapacityInputs c;
        c.priors.assign(modes, 1.0 / static_cast<double>(modes));
        c.p.assign(modes, std::vector<double>(modes, 0.0));
        c.q.assign(modes, 1.0);
        return c;
    }

    /// p = I, q = 1.
    static CapacityInputs perfect(std::size_t modes)
    {
        auto c = uniform_priors(modes);
        for (std::size_t l = 0; l < modes; ++l) c.p[l][l] = 1.0;
        return c;
    }

    void validate(std::size_t modes) const
    {
        if (priors.size() != modes || p.size() != modes || q.size() != modes)
            throw std::invalid_argument("capacity inputs do not match the mode table");
        for (const auto& row : p) {
            if (row.size() != modes) throw std::invalid_argument("capacity inputs do not match the mode table");
            double s = 0.0;
            for (double v : row) {
                if (v < 0.0 || v > 1.0) throw std::invalid_argument("classification probabilities must lie in [0,1]");
                s += v;
            }
            if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("classification matrix rows must sum to 1");
        }
        for (double v : q)
            if (v < 0.0 || v > 1.0) throw std::invalid_argument("near decision probabilities must lie in [0,1]");
    }
};

/// Rate credited to one frame of true mode l given the decision. Anything but
/// the correct access type, and for NOMA a near decision, earns nothing.
inline double trial_rate(const SinrModel& model, int true_mode, bool declared_noma, std::optional<int> decided_mode,
                         bool declared_near, const ChannelRealization& chan)
{
    if (true_mode == 0) return declared_noma ? 0.0 : model.rate(0, 0, chan);
    if (!declared_noma || !declared_near || !decided_mode) return 0.0;
    return model.rate(true_mode, *decided_mode, chan);
}

/// C = Σ_l π_l E_h[Σ_m p_{l→m} q_m log₂(1 + η_{l→m})], E_h over `samples`
/// Rayleigh draws from the given seed.
inline double capacity(const ModeTable& table, const CapacityInputs& in, double snr_db, std::size_t samples,
                       std::uint64_t seed = 1, SicPolicy policy = SicPolicy::matched_index)
{
    const auto n = static_cast<std::size_t>(table.size());
    in.validate(n);
    if (samples == 0) throw std::invalid_argument("capacity needs at least one channel sample");
    const SinrModel model(table, policy);
    Rng rng(substream_seed(seed, 0xca9ac17ULL, 0));
    double total = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const auto chan = sample_channel(rng, snr_db);
        double c = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            if (in.priors[l] == 0.0) continue;
            double row = 0.0;
            for (std::size_t m = 0; m < n; ++m) {
                const double w = in.p[l][m] * (m == 0 ? 1.0 : in.q[m]);
                if (w == 0.0) continue;
                row += w * model.rate(static_cast<int>(l), static_cast<int>(m), chan);
            }
            c += in.priors[l] * row;
        }
        total += c;
    }
    return total / static_cast<double>(samples);
}

} // namespace nbsc

#endif // NBSC_ANALYSIS_HPP
