#ifndef NBSC_CHANNEL_HPP
#define NBSC_CHANNEL_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "modset.hpp"
#include "rng.hpp"

namespace nbsc {

/// Which user a frame is meant for. `oma` marks single-user frames.
enum class Role { near, far, oma };

inline const char* role_name(Role r) noexcept
{
    switch (r) {
    case Role::near: return "near";
    case Role::far: return "far";
    case Role::oma: return "oma";
    }
    return "?";
}

/// Flat block-fading realization. The receiver estimate is perfect by default.
struct ChannelRealization {
    cplx h{1.0, 0.0};
    double sigma2 = 1.0;
    cplx h_est{1.0, 0.0};

    /// σ̃² = σ²/|h|².
    double effective_noise() const noexcept { return sigma2 / std::norm(h); }
};

inline double noise_variance(double snr_db) noexcept { return std::pow(10.0, -snr_db / 10.0); }

/// Standard circularly-symmetric complex Gaussian, E|z|² = 1.
inline cplx complex_normal(Rng& rng)
{
    std::normal_distribution<double> nd(0.0, std::numbers::sqrt2 / 2.0);
    const double re = nd(rng);
    const double im = nd(rng);
    return {re, im};
}

/// h ~ CN(0,1), σ² = 10^(−SNR/10) for unit total transmit power.
inline ChannelRealization sample_channel(Rng& rng, double snr_db)
{
    ChannelRealization c;
    c.h = complex_normal(rng);
    c.h_est = c.h;
    c.sigma2 = noise_variance(snr_db);
    return c;
}

/// Known pilot values. Pilots for the two users are drawn from a QPSK alphabet
/// independent of the data modulation; the far and near pilots differ so the
/// power weighting of the receiver's own pilot is observable.
struct PilotScheme {
    cplx far{std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0};
    cplx near{std::numbers::sqrt2 / 2.0, -std::numbers::sqrt2 / 2.0};
    cplx oma{std::numbers::sqrt2 / 2.0, std::numbers::sqrt2 / 2.0};
    Constellation alphabet = base_constellation(Modulation::qpsk);

    /// The pilot a receiver of the given role knows as its own.
    cplx own(Role r) const noexcept
    {
        switch (r) {
        case Role::near: return near;
        case Role::far: return far;
        case Role::oma: return oma;
        }
        return oma;
    }
};

/// p_u = √P_f·p^f + √P_n·p^n for NOMA modes, p^0 for OMA.
inline cplx transmitted_pilot(const ModulationMode& mode, const PilotScheme& pilots) noexcept
{
    if (mode.is_oma()) return pilots.oma;
    return std::sqrt(mode.power_far) * pilots.far + std::sqrt(mode.power_near) * pilots.near;
}

struct FrameTruth {
    int mode = 0;
    Role role = Role::oma;
    std::vector<std::uint32_t> far_index;   // per symbol, index into χ_l^f (χ_0 for OMA)
    std::vector<std::uint32_t> near_index;  // per symbol, index into χ_l^n (zeros for OMA)
    cplx pilot{};                           // p_u
};

struct TransmitFrame {
    std::vector<cplx> data;  // y_1..y_K
    cplx pilot_unrotated{};  // r_u
    cplx pilot_rotated{};    // r_r
    FrameTruth truth;
};

/// All randomness of one frame apart from the channel: symbol indices and
/// unit-variance noise. Re-synthesizing the same draw against different tables
/// gives paired received signals.
struct FrameDraw {
    std::vector<std::uint32_t> far_index;
    std::vector<std::uint32_t> near_index;
    std::vector<cplx> data_noise;
    cplx pilot_noise_u{};
    cplx pilot_noise_r{};
};

inline FrameDraw draw_frame(Rng& rng, const ModeTable& table, int mode, std::size_t symbols)
{
    if (symbols == 0) throw std::invalid_argument("frame needs at least one data symbol");
    const auto& m = table.mode(mode);
    const auto nf = static_cast<std::uint32_t>(table.far_set(mode).size());
    const auto nn = m.is_oma() ? 1u : static_cast<std::uint32_t>(table.near_set(mode).size());
    std::uniform_int_distribution<std::uint32_t> pick_far(0, nf - 1);
    std::uniform_int_distribution<std::uint32_t> pick_near(0, nn - 1);

    FrameDraw d;
    d.far_index.resize(symbols);
    d.near_index.resize(symbols);
    d.data_noise.resize(symbols);
    for (std::size_t k = 0; k < symbols; ++k) {
        d.far_index[k] = pick_far(rng);
        d.near_index[k] = pick_near(rng);
    }
    for (auto& w : d.data_noise) w = complex_normal(rng);
    d.pilot_noise_u = complex_normal(rng);
    d.pilot_noise_r = complex_normal(rng);
    return d;
}

/// y_k = h·e^{jθ_l}(s_f + s_n) + w_k plus the pilot pair r_u = h·p_u + w_u,
/// r_r = h·p_u·e^{jφ_l} + w_r. One h covers the whole frame.
inline TransmitFrame synthesize(const ModeTable& table, int mode, Role role, const FrameDraw& draw,
                                const ChannelRealization& chan, const PilotScheme& pilots = {})
{
    const auto& m = table.mode(mode);
    const auto& full = table.full_set(mode);
    const std::size_t nn = m.is_oma() ? 1 : table.near_set(mode).size();
    const double sigma = std::sqrt(chan.sigma2);

    TransmitFrame f;
    f.data.resize(draw.far_index.size());
    for (std::size_t k = 0; k < f.data.size(); ++k) {
        const std::size_t idx = draw.far_index[k] * nn + draw.near_index[k];
        f.data[k] = cmul(chan.h, full[idx]) + sigma * draw.data_noise[k];
    }
    const cplx pu = transmitted_pilot(m, pilots);
    const cplx hp = chan.h * pu;
    f.pilot_unrotated = hp + sigma * draw.pilot_noise_u;
    f.pilot_rotated = hp * std::polar(1.0, m.pilot_rotation) + sigma * draw.pilot_noise_r;
    f.truth = {mode, m.is_oma() ? Role::oma : role, draw.far_index, draw.near_index, pu};
    return f;
}

/// Data part of a frame; the pilot pair is generated too but may be ignored.
inline TransmitFrame transmit_data(const ModeTable& table, int mode, Role role, const ChannelRealization& chan,
                                   std::size_t symbols, Rng& rng)
{
    return synthesize(table, mode, role, draw_frame(rng, table, mode, symbols), chan);
}

struct PilotPair {
    cplx unrotated;
    cplx rotated;
    cplx transmitted;
};

inline PilotPair transmit_pilots(const ModulationMode& mode, const ChannelRealization& chan, Rng& rng,
                                 const PilotScheme& pilots = {})
{
    const double sigma = std::sqrt(chan.sigma2);
    const cplx pu = transmitted_pilot(mode, pilots);
    const cplx hp = chan.h * pu;
    const cplx wu = complex_normal(rng);
    const cplx wr = complex_normal(rng);
    return {hp + sigma * wu, hp * std::polar(1.0, mode.pilot_rotation) + sigma * wr, pu};
}

} // namespace nbsc

#endif // NBSC_CHANNEL_HPP
