#ifndef NBSC_SIM_HPP
#define NBSC_SIM_HPP

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "analysis.hpp"
#include "channel.hpp"
#include "mlc.hpp"
#include "modset.hpp"
#include "prc.hpp"
#include "presets.hpp"
#include "receiver.hpp"
#include "rng.hpp"

// Monte Carlo engine. Every trial draws one channel and one frame; all
// configured classifiers see the same realization. Results are reduced in a
// fixed chunk order, so the worker count never changes the output.

namespace nbsc {

struct SimConfig {
    ModeTable table = presets::case1();
    std::string preset = "case1";
    std::vector<double> snr_db{0.0};
    std::size_t trials = 100000;
    std::size_t symbols = 10;  // K
    std::vector<Scheme> schemes{Scheme::mlc, Scheme::mlc_prm, Scheme::prc, Scheme::genie};
    PhaseRule phase_rule = PhaseRule::uniform;
    std::optional<RegionWeights> region_weights;  // non-uniform rule only
    std::vector<double> thetas;                   // Θ for MLC-PRM; empty means all zero
    std::uint64_t seed = 1;
    std::optional<int> fixed_mode;  // truth mode; uniform over the table when empty
    Role truth_role = Role::near;
    SicPolicy sic_policy = SicPolicy::matched_index;
    std::size_t capacity_samples = 10000;  // E_h draws for the matrix-form capacity

    void validate() const
    {
        if (trials < 1) throw std::invalid_argument("trials must be at least 1");
        if (snr_db.empty()) throw std::invalid_argument("SNR grid must not be empty");
        if (symbols < 1) throw std::invalid_argument("frame needs at least one data symbol");
        if (schemes.empty()) throw std::invalid_argument("at least one classifier is required");
        for (double s : snr_db)
            if (!std::isfinite(s)) throw std::invalid_argument("SNR values must be finite");
        if (!thetas.empty() && thetas.size() != static_cast<std::size_t>(table.size()))
            throw std::invalid_argument("rotation list length must equal the number of modes");
        if (fixed_mode && (*fixed_mode < 0 || *fixed_mode >= table.size()))
            throw std::invalid_argument("fixed mode is not in the table");
        if (truth_role == Role::oma) throw std::invalid_argument("truth role must be near or far");
        if (capacity_samples < 1) throw std::invalid_argument("capacity samples must be at least 1");
    }
};

/// The plan a config selects for its table.
inline PhasePlan make_plan(const SimConfig& cfg)
{
    if (cfg.phase_rule == PhaseRule::uniform) return assign_uniform(cfg.table);
    return cfg.region_weights ? assign_nonuniform(cfg.table, *cfg.region_weights) : assign_nonuniform(cfg.table);
}

struct SchemeTrial {
    Scheme scheme = Scheme::genie;
    std::shared_ptr<const TransmitFrame> frame;  // received samples the scheme saw
    DetectionOutcome outcome;
    double rate = 0.0;
};

struct TrialRecord {
    double snr_db = 0.0;
    std::uint64_t trial = 0;
    int mode = 0;
    Role role = Role::near;
    ChannelRealization chan;
    double genie_rate = 0.0;
    std::vector<SchemeTrial> results;  // in configured scheme order
};

/// Wilson score interval for k events in n trials.
struct Proportion {
    std::uint64_t events = 0;
    std::uint64_t trials = 0;
    double value = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    double half_width() const noexcept { return 0.5 * (upper - lower); }
};

inline constexpr double z95 = 1.959963984540054;

inline Proportion wilson(std::uint64_t k, std::uint64_t n, double z = z95)
{
    if (k > n) throw std::invalid_argument("more events than trials");
    Proportion p{k, n, 0.0, 0.0, 1.0};
    if (n == 0) return p;
    const double nn = static_cast<double>(n);
    const double ph = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (ph + z2 / (2.0 * nn)) / denom;
    const double half = z / denom * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn));
    p.value = ph;
    p.lower = k == 0 ? 0.0 : std::max(0.0, center - half);
    p.upper = k == n ? 1.0 : std::min(1.0, center + half);
    return p;
}

/// Mean and normal-approximation 95% half-width from running sums.
struct MeanEstimate {
    double mean = 0.0;
    double half_width = 0.0;
};

inline MeanEstimate mean_estimate(double sum, double sum_sq, std::uint64_t n)
{
    if (n == 0) return {};
    const double nn = static_cast<double>(n);
    const double mean = sum / nn;
    if (n < 2) return {mean, 0.0};
    const double var = std::max(0.0, (sum_sq - nn * mean * mean) / (nn - 1.0));
    return {mean, z95 * std::sqrt(var / nn)};
}

/// Per-scheme counters over a block of trials.
struct SchemeCounts {
    std::uint64_t trials = 0;
    std::uint64_t oma_noma_errors = 0;
    std::uint64_t noma_truth = 0;
    std::uint64_t near_far_errors = 0;  // NOMA truth not declared (NOMA, true role)
    std::uint64_t mc_trials = 0;        // NOMA truth declared (NOMA, true role)
    std::uint64_t mc_errors = 0;
    std::uint64_t frames_lost = 0;
    std::uint64_t symbols = 0;
    std::uint64_t symbol_errors = 0;
    double rate_sum = 0.0;
    double rate_sq = 0.0;
    double delta_sum = 0.0;  // rate − genie rate
    double delta_sq = 0.0;
    std::vector<std::uint64_t> confusion;      // truth l × decided m, m = 0 for OMA
    std::vector<std::uint64_t> decided_noma;   // per decided mode, NOMA truth only
    std::vector<std::uint64_t> decided_right;  // ... and with the true role

    explicit SchemeCounts(std::size_t modes = 0)
        : confusion(modes * modes, 0), decided_noma(modes, 0), decided_right(modes, 0)
    {
    }

    void merge(const SchemeCounts& o)
    {
        trials += o.trials;
        oma_noma_errors += o.oma_noma_errors;
        noma_truth += o.noma_truth;
        near_far_errors += o.near_far_errors;
        mc_trials += o.mc_trials;
        mc_errors += o.mc_errors;
        frames_lost += o.frames_lost;
        symbols += o.symbols;
        symbol_errors += o.symbol_errors;
        rate_sum += o.rate_sum;
        rate_sq += o.rate_sq;
        delta_sum += o.delta_sum;
        delta_sq += o.delta_sq;
        for (std::size_t i = 0; i < confusion.size(); ++i) confusion[i] += o.confusion[i];
        for (std::size_t i = 0; i < decided_noma.size(); ++i) {
            decided_noma[i] += o.decided_noma[i];
            decided_right[i] += o.decided_right[i];
        }
    }

    void add(const TrialRecord& rec, const SchemeTrial& st, std::size_t modes)
    {
        const auto& c = st.outcome.classification;
        const bool truth_noma = rec.mode != 0;
        const bool decided_noma_flag = c.access == Access::noma;
        ++trials;
        oma_noma_errors += truth_noma != decided_noma_flag;
        const auto decided = static_cast<std::size_t>(decided_noma_flag ? c.mode.value_or(0) : 0);
        confusion[static_cast<std::size_t>(rec.mode) * modes + decided] += 1;
        if (truth_noma) {
            ++noma_truth;
            const bool role_ok = decided_noma_flag && c.role == rec.role;
            if (!role_ok) ++near_far_errors;
            if (decided_noma_flag) {
                ++decided_noma[decided];
                decided_right[decided] += role_ok;
            }
            if (role_ok) {
                ++mc_trials;
                mc_errors += c.mode != rec.mode;
            }
        }
        frames_lost += st.outcome.frame_lost;
        symbols += st.outcome.detected.size();
        symbol_errors += st.outcome.symbol_errors;
        rate_sum += st.rate;
        rate_sq += st.rate * st.rate;
        const double d = st.rate - rec.genie_rate;
        delta_sum += d;
        delta_sq += d * d;
    }
};

struct SchemeMetrics {
    Scheme scheme = Scheme::genie;
    SchemeCounts counts;
    Proportion oma_noma;
    Proportion near_far;
    Proportion mc;  // conditioned on correct NOMA and role decisions
    Proportion frame_loss;
    Proportion ser;
    MeanEstimate capacity;        // per-trial rates averaged
    MeanEstimate delta_vs_genie;  // paired, capacity − genie capacity
    double capacity_matrix = 0.0;  // matrix form from measured p, q
    CapacityInputs measured;

    /// Row-normalized confusion counts.
    std::vector<std::vector<double>> confusion_rates() const { return measured.p; }
};

struct CurvePoint {
    double snr_db = 0.0;
    std::vector<SchemeMetrics> schemes;

    const SchemeMetrics& at(Scheme s) const
    {
        for (const auto& m : schemes)
            if (m.scheme == s) return m;
        throw std::invalid_argument(std::string("scheme not in sweep: ") + scheme_name(s));
    }
};

/// Worker count from NBSC_WORKERS, else the hardware concurrency.
inline unsigned worker_count()
{
    if (const char* env = std::getenv("NBSC_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
/// thrown by any task is rethrown after all workers stop.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned workers = worker_count())
{
    const unsigned w = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), n));
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// Stream id of an SNR point; depends on the value, not its grid position, so
/// the same SNR in different sweeps sees the same realizations.
inline std::uint64_t snr_stream(double snr_db) noexcept { return std::bit_cast<std::uint64_t>(snr_db + 0.0); }

class Simulator {
public:
    explicit Simulator(SimConfig cfg)
        : cfg_((cfg.validate(), std::move(cfg))),
          plan_(make_plan(cfg_)),
          plain_(apply_plan(cfg_.table, plan_)),
          prm_(build_prm_table(plain_, thetas())),
          plain_model_(plain_, cfg_.sic_policy),
          prm_model_(prm_, cfg_.sic_policy)
    {
        for (auto s : cfg_.schemes) uses_prm_ |= s == Scheme::mlc_prm;
        for (int l = 0; l < plain_.size(); ++l) {
            const auto a = plain_.full_set(l).points();
            const auto b = prm_.full_set(l).points();
            prm_reuse_.push_back(std::equal(a.begin(), a.end(), b.begin(), b.end()) ? 1 : 0);
        }
    }

    const SimConfig& config() const noexcept { return cfg_; }
    const PhasePlan& plan() const noexcept { return plan_; }
    const ModeTable& table() const noexcept { return plain_; }
    const ModeTable& prm_table() const noexcept { return prm_; }
    const ModeTable& table_for(Scheme s) const noexcept { return s == Scheme::mlc_prm ? prm_ : plain_; }
    const SinrModel& model_for(Scheme s) const noexcept { return s == Scheme::mlc_prm ? prm_model_ : plain_model_; }

    TrialRecord run_trial(double snr_db, std::uint64_t trial) const
    {
        Rng rng = substream(cfg_.seed, snr_stream(snr_db), trial);
        TrialRecord rec;
        rec.snr_db = snr_db;
        rec.trial = trial;
        rec.chan = sample_channel(rng, snr_db);
        if (cfg_.fixed_mode) {
            rec.mode = *cfg_.fixed_mode;
        } else {
            std::uniform_int_distribution<int> pick(0, plain_.size() - 1);
            rec.mode = pick(rng);
        }
        rec.role = rec.mode == 0 ? Role::oma : cfg_.truth_role;
        const FrameDraw draw = draw_frame(rng, plain_, rec.mode, cfg_.symbols);

        auto plain_frame = std::make_shared<const TransmitFrame>(synthesize(plain_, rec.mode, rec.role, draw, rec.chan));
        std::shared_ptr<const TransmitFrame> prm_frame;
        if (uses_prm_) prm_frame = std::make_shared<const TransmitFrame>(synthesize(prm_, rec.mode, rec.role, draw, rec.chan));

        rec.genie_rate = credited_rate(plain_model_, rec, genie_classification(plain_frame->truth));

        std::optional<SymbolScores> plain_scores;
        auto scores = [&]() -> const SymbolScores& {
            if (!plain_scores) plain_scores.emplace(plain_frame->data, plain_, rec.chan);
            return *plain_scores;
        };
        const Modulation own = own_order(plain_.mode(rec.mode), rec.role);

        rec.results.reserve(cfg_.schemes.size());
        for (auto s : cfg_.schemes) {
            SchemeTrial st;
            st.scheme = s;
            st.frame = s == Scheme::mlc_prm ? prm_frame : plain_frame;
            const auto& table = table_for(s);
            ClassificationResult c;
            if (s == Scheme::mlc) {
                c = classify_three_step(plain_frame->data, scores(), plain_, rec.chan, own);
            } else if (s == Scheme::mlc_prm && prm_frame->data == plain_frame->data) {
                const SymbolScores ps(prm_frame->data, prm_, rec.chan, &scores(), prm_reuse_);
                c = classify_three_step(prm_frame->data, ps, prm_, rec.chan, own);
            } else {
                c = classify(*st.frame, s, ReceiverContext{&table, &plan_, {}}, rec.chan);
            }
            st.outcome = detect_frame(*st.frame, c, table, rec.chan);
            st.rate = credited_rate(model_for(s), rec, st.outcome.classification);
            rec.results.push_back(std::move(st));
        }
        return rec;
    }

    CurvePoint run_point(double snr_db) const
    {
        const std::size_t modes = static_cast<std::size_t>(plain_.size());
        const std::size_t n_chunks = (cfg_.trials + chunk_size - 1) / chunk_size;
        std::vector<std::vector<SchemeCounts>> partial(n_chunks);
        parallel_for(n_chunks, [&](std::size_t c) {
            std::vector<SchemeCounts> acc(cfg_.schemes.size(), SchemeCounts(modes));
            const std::size_t begin = c * chunk_size;
            const std::size_t end = std::min(cfg_.trials, begin + chunk_size);
            for (std::size_t t = begin; t < end; ++t) {
                const auto rec = run_trial(snr_db, t);
                for (std::size_t i = 0; i < rec.results.size(); ++i) acc[i].add(rec, rec.results[i], modes);
            }
            partial[c] = std::move(acc);
        });

        std::vector<SchemeCounts> total(cfg_.schemes.size(), SchemeCounts(modes));
        for (const auto& chunk : partial)
            for (std::size_t i = 0; i < total.size(); ++i) total[i].merge(chunk[i]);

        CurvePoint pt;
        pt.snr_db = snr_db;
        for (std::size_t i = 0; i < total.size(); ++i) pt.schemes.push_back(summarize(cfg_.schemes[i], total[i], snr_db));
        return pt;
    }

    std::vector<CurvePoint> run_sweep(const std::function<void(const CurvePoint&)>& on_point = {}) const
    {
        std::vector<CurvePoint> out;
        out.reserve(cfg_.snr_db.size());
        for (double s : cfg_.snr_db) {
            out.push_back(run_point(s));
            if (on_point) on_point(out.back());
        }
        return out;
    }

    static constexpr std::size_t chunk_size = 256;

private:
    std::vector<double> thetas() const
    {
        return cfg_.thetas.empty() ? std::vector<double>(static_cast<std::size_t>(cfg_.table.size()), 0.0) : cfg_.thetas;
    }

    static double credited_rate(const SinrModel& model, const TrialRecord& rec, const ClassificationResult& c)
    {
        if (rec.role == Role::far) return 0.0;
        return trial_rate(model, rec.mode, c.access == Access::noma, c.mode, c.role == Role::near, rec.chan);
    }

    SchemeMetrics summarize(Scheme s, const SchemeCounts& c, double snr_db) const
    {
        const std::size_t modes = static_cast<std::size_t>(plain_.size());
        SchemeMetrics m;
        m.scheme = s;
        m.counts = c;
        m.oma_noma = wilson(c.oma_noma_errors, c.trials);
        m.near_far = wilson(c.near_far_errors, c.noma_truth);
        m.mc = wilson(c.mc_errors, c.mc_trials);
        m.frame_loss = wilson(c.frames_lost, c.trials);
        m.ser = wilson(c.symbol_errors, c.symbols);
        m.capacity = mean_estimate(c.rate_sum, c.rate_sq, c.trials);
        m.delta_vs_genie = mean_estimate(c.delta_sum, c.delta_sq, c.trials);

        m.measured = CapacityInputs::uniform_priors(modes);
        for (std::size_t l = 0; l < modes; ++l) {
            std::uint64_t row = 0;
            for (std::size_t j = 0; j < modes; ++j) row += c.confusion[l * modes + j];
            if (row == 0) {
                m.measured.p[l][l] = 1.0;
                m.measured.priors[l] = 0.0;
                continue;
            }
            for (std::size_t j = 0; j < modes; ++j)
                m.measured.p[l][j] = static_cast<double>(c.confusion[l * modes + j]) / static_cast<double>(row);
        }
        double prior_sum = 0.0;
        for (double p : m.measured.priors) prior_sum += p;
        for (double& p : m.measured.priors) p /= prior_sum;
        for (std::size_t j = 1; j < modes; ++j)
            m.measured.q[j] = c.decided_noma[j] == 0
                                  ? 0.0
                                  : static_cast<double>(c.decided_right[j]) / static_cast<double>(c.decided_noma[j]);
        if (cfg_.truth_role == Role::near)
            m.capacity_matrix = capacity(table_for(s), m.measured, snr_db, cfg_.capacity_samples,
                                         substream_seed(cfg_.seed, snr_stream(snr_db), ~0ULL), cfg_.sic_policy);
        return m;
    }

    SimConfig cfg_;
    PhasePlan plan_;
    ModeTable plain_;
    ModeTable prm_;
    SinrModel plain_model_;
    SinrModel prm_model_;
    bool uses_prm_ = false;
    std::vector<std::uint8_t> prm_reuse_;  // χ_l identical in both tables
};

inline TrialRecord run_trial(const SimConfig& cfg, double snr_db, std::uint64_t trial)
{
    return Simulator(cfg).run_trial(snr_db, trial);
}

inline std::vector<CurvePoint> run_sweep(const SimConfig& cfg) { return Simulator(cfg).run_sweep(); }

} // namespace nbsc

#endif // NBSC_SIM_HPP
