#ifndef NBSC_RECEIVER_HPP
#define NBSC_RECEIVER_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "channel.hpp"
#include "mlc.hpp"
#include "modset.hpp"
#include "prc.hpp"

// Symbol detection after classification: plain ML detection for OMA, symbol
// level SIC for the near UT, far-UT detection treating the near signal as
// noise. A misdetected access type or UT role voids the frame.

namespace nbsc {

enum class Scheme { mlc, mlc_prm, prc, genie };

inline const char* scheme_name(Scheme s) noexcept
{
    switch (s) {
    case Scheme::mlc: return "mlc";
    case Scheme::mlc_prm: return "prm";
    case Scheme::prc: return "prc";
    case Scheme::genie: return "genie";
    }
    return "?";
}

/// Accepts the short names above plus "mlc-prm".
inline Scheme scheme_from_name(std::string_view s)
{
    if (s == "mlc") return Scheme::mlc;
    if (s == "prm" || s == "mlc-prm" || s == "mlc_prm") return Scheme::mlc_prm;
    if (s == "prc") return Scheme::prc;
    if (s == "genie") return Scheme::genie;
    throw std::invalid_argument("unknown classifier: " + std::string(s));
}

/// Nearest point of the ĥ-scaled set; ties go to the lower index.
inline std::size_t detect(cplx y, const Constellation& set, const ChannelRealization& chan)
{
    if (set.empty()) throw std::invalid_argument("detection over an empty constellation");
    std::size_t best = 0;
    double bd = std::norm(y - cmul(chan.h_est, set.points()[0]));
    for (std::size_t i = 1; i < set.size(); ++i) {
        const double d = std::norm(y - cmul(chan.h_est, set.points()[i]));
        if (d < bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

/// Bit label of the detected point.
inline std::uint32_t detect_label(cplx y, const Constellation& set, const ChannelRealization& chan)
{
    return set.labels()[detect(y, set, chan)];
}

struct SicResult {
    cplx residual;
    std::size_t far_index;  // ŝ_f as an index into χ_l^f
};

/// ŝ_f = argmin over χ_l^f of |y − ĥs|; returns y − ĥŝ_f.
inline SicResult sic_cancel(cplx y, const ModeTable& table, int l, const ChannelRealization& chan)
{
    if (table.mode(l).is_oma()) throw std::invalid_argument("SIC undefined for OMA");
    const auto& far = table.far_set(l);
    const std::size_t i = detect(y, far, chan);
    return {y - cmul(chan.h_est, far.points()[i]), i};
}

struct DetectionOutcome {
    ClassificationResult classification;
    std::vector<std::uint32_t> detected;  // per symbol index into the detection set
    std::size_t symbol_errors = 0;
    bool used_sic = false;
    bool frame_lost = false;  // wrong access type or wrong UT role
};

/// Classification equal to the frame's truth.
inline ClassificationResult genie_classification(const FrameTruth& truth)
{
    ClassificationResult r;
    if (truth.role == Role::oma) return r;
    r.access = Access::noma;
    r.mode = truth.mode;
    r.role = truth.role;
    return r;
}

/// The order a receiver knows as its own: the near or far UT order of the
/// true mode, or the OMA order.
inline Modulation own_order(const ModulationMode& mode, Role role) noexcept
{
    return role == Role::near && mode.near_mod ? *mode.near_mod : mode.far_mod;
}

struct ReceiverContext {
    const ModeTable* table = nullptr;  // table the frame was synthesized with
    const PhasePlan* plan = nullptr;   // needed for PRC only
    PilotScheme pilots{};
};

inline ClassificationResult classify(const TransmitFrame& frame, Scheme scheme, const ReceiverContext& ctx,
                                     const ChannelRealization& chan)
{
    const auto& table = *ctx.table;
    const auto& truth = frame.truth;
    const Modulation own = own_order(table.mode(truth.mode), truth.role);
    switch (scheme) {
    case Scheme::genie: return genie_classification(truth);
    case Scheme::mlc:
    case Scheme::mlc_prm: return classify_three_step(frame.data, table, chan, own);
    case Scheme::prc:
        if (!ctx.plan) throw std::invalid_argument("PRC needs a phase plan");
        return classify_pilot_reuse(frame.pilot_unrotated, frame.pilot_rotated, table, *ctx.plan, chan, own,
                                    ctx.pilots.own(truth.role == Role::far ? Role::far : Role::near),
                                    ctx.pilots.alphabet);
    }
    throw std::invalid_argument("unknown classifier");
}

/// Detection and scoring of one frame given a classification.
inline DetectionOutcome detect_frame(const TransmitFrame& frame, const ClassificationResult& cls,
                                     const ModeTable& table, const ChannelRealization& chan)
{
    const auto& truth = frame.truth;
    const std::size_t k = frame.data.size();
    DetectionOutcome out;
    out.classification = cls;
    out.detected.assign(k, 0);

    const bool truth_oma = truth.role == Role::oma;
    if (cls.access == Access::oma) {
        if (!truth_oma) {
            out.frame_lost = true;
            out.symbol_errors = k;
            return out;
        }
        const auto& set = table.full_set(0);
        for (std::size_t i = 0; i < k; ++i) {
            out.detected[i] = static_cast<std::uint32_t>(detect(frame.data[i], set, chan));
            out.symbol_errors += out.detected[i] != truth.far_index[i];
        }
        return out;
    }

    if (truth_oma || !cls.mode || !cls.role || *cls.role != truth.role) {
        out.frame_lost = true;
        out.symbol_errors = k;
        return out;
    }

    const int m = *cls.mode;
    const auto& decided = table.mode(m);
    const auto& actual = table.mode(truth.mode);
    if (*cls.role == Role::near) {
        out.used_sic = true;
        const auto& set = table.near_set(m);
        const bool same_order = decided.near_mod == actual.near_mod;
        for (std::size_t i = 0; i < k; ++i) {
            const auto r = sic_cancel(frame.data[i], table, m, chan);
            out.detected[i] = static_cast<std::uint32_t>(detect(r.residual, set, chan));
            out.symbol_errors += !same_order || out.detected[i] != truth.near_index[i];
        }
    } else {
        const auto& set = table.far_set(m);
        const bool same_order = decided.far_mod == actual.far_mod;
        for (std::size_t i = 0; i < k; ++i) {
            out.detected[i] = static_cast<std::uint32_t>(detect(frame.data[i], set, chan));
            out.symbol_errors += !same_order || out.detected[i] != truth.far_index[i];
        }
    }
    return out;
}

/// Classifier followed by detection on one frame.
inline DetectionOutcome receive_end_to_end(const TransmitFrame& frame, Scheme scheme, const ReceiverContext& ctx,
                                           const ChannelRealization& chan)
{
    return detect_frame(frame, classify(frame, scheme, ctx, chan), *ctx.table, chan);
}

} // namespace nbsc

#endif // NBSC_RECEIVER_HPP
