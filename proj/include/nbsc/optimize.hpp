#ifndef NBSC_OPTIMIZE_HPP
#define NBSC_OPTIMIZE_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "analysis.hpp"
#include "channel.hpp"
#include "mlc.hpp"
#include "modset.hpp"
#include "receiver.hpp"
#include "sim.hpp"

// Grid search for the OMA data rotation θ_0 of phase-rotated modulation, with
// Θ = {θ_0, 0, ..., 0}. The objective is the measured near-UT capacity of the
// ML three-step classifier; every grid point sees the same trials.

namespace nbsc {

struct ThetaSearch {
    double step = 0.01;
    double upper = std::numbers::pi / 2.0;  // grid covers [0, upper)
    std::size_t trials = 10000;
    std::size_t symbols = 10;
    std::uint64_t seed = 1;
};

struct ThetaPoint {
    double theta = 0.0;
    MeanEstimate capacity;
};

struct ThetaResult {
    double theta = 0.0;
    MeanEstimate capacity;
    std::vector<ThetaPoint> grid;
};

/// Trials shared by every θ_0 evaluated at one SNR.
class PrmObjective {
public:
    PrmObjective(const ModeTable& table, double snr_db, std::size_t trials, std::size_t symbols, std::uint64_t seed)
        : table_(table), model_(table)
    {
        if (trials < 1) throw std::invalid_argument("trials must be at least 1");
        if (symbols < 1) throw std::invalid_argument("frame needs at least one data symbol");
        trials_.reserve(trials);
        std::uniform_int_distribution<int> pick(0, table.size() - 1);
        for (std::size_t t = 0; t < trials; ++t) {
            Rng rng = substream(seed, snr_stream(snr_db), t);
            Trial tr;
            tr.chan = sample_channel(rng, snr_db);
            tr.mode = pick(rng);
            tr.draw = draw_frame(rng, table, tr.mode, symbols);
            trials_.push_back(std::move(tr));
        }
    }

    /// Measured MLC-PRM capacity with Θ = {θ_0, 0, ..., 0}.
    MeanEstimate operator()(double theta0) const
    {
        const ModeTable prm = build_prm_table(table_, oma_only_rotation(table_, theta0));
        double sum = 0.0;
        double sq = 0.0;
        for (const auto& tr : trials_) {
            const Role role = tr.mode == 0 ? Role::oma : Role::near;
            const auto frame = synthesize(prm, tr.mode, role, tr.draw, tr.chan);
            const auto c = classify_three_step(frame.data, prm, tr.chan, own_order(prm.mode(tr.mode), role));
            const double r =
                trial_rate(model_, tr.mode, c.access == Access::noma, c.mode, c.role == Role::near, tr.chan);
            sum += r;
            sq += r * r;
        }
        return mean_estimate(sum, sq, trials_.size());
    }

private:
    struct Trial {
        ChannelRealization chan;
        int mode = 0;
        FrameDraw draw;
    };

    ModeTable table_;
    SinrModel model_;
    std::vector<Trial> trials_;
};

/// argmax of the measured capacity over θ_0 = 0, step, 2·step, ... < upper;
/// ties go to the smallest θ_0.
inline ThetaResult optimize_theta(const ModeTable& table, double snr_db, const ThetaSearch& search = {})
{
    if (!(search.step > 0.0)) throw std::invalid_argument("grid resolution must be positive");
    if (!(search.upper > 0.0)) throw std::invalid_argument("grid upper bound must be positive");
    const PrmObjective objective(table, snr_db, search.trials, search.symbols, search.seed);
    const auto n = static_cast<std::size_t>(std::ceil(search.upper / search.step - 1e-9));
    ThetaResult res;
    res.grid.resize(n);
    parallel_for(n, [&](std::size_t i) {
        const double theta = search.step * static_cast<double>(i);
        res.grid[i] = {theta, objective(theta)};
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (res.grid[i].capacity.mean > res.grid[best].capacity.mean) best = i;
    res.theta = res.grid[best].theta;
    res.capacity = res.grid[best].capacity;
    return res;
}

} // namespace nbsc

#endif // NBSC_OPTIMIZE_HPP
