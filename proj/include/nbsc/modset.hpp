#ifndef NBSC_MODSET_HPP
#define NBSC_MODSET_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbsc {

using cplx = std::complex<double>;

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Square QAM orders supported for either user.
enum class Modulation : int { qpsk = 4, qam16 = 16, qam64 = 64 };

constexpr int order_of(Modulation m) noexcept { return static_cast<int>(m); }

inline Modulation modulation_from_order(int order)
{
    switch (order) {
    case 4: return Modulation::qpsk;
    case 16: return Modulation::qam16;
    case 64: return Modulation::qam64;
    default: throw std::invalid_argument("unsupported modulation order: " + std::to_string(order));
    }
}

inline const char* modulation_name(Modulation m) noexcept
{
    switch (m) {
    case Modulation::qpsk: return "QPSK";
    case Modulation::qam16: return "16QAM";
    case Modulation::qam64: return "64QAM";
    }
    return "?";
}

/// Complex product by the textbook formula, without the inf/NaN recovery of
/// operator*.
constexpr cplx cmul(cplx a, cplx b) noexcept
{
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

/// Wraps an angle into [0, 2π).
inline double wrap_angle(double phi) noexcept
{
    double r = std::fmod(phi, two_pi);
    if (r < 0.0) r += two_pi;
    if (r >= two_pi) r = 0.0;
    return r;
}

/// One row of a modulation mode table. Mode 0 is the OMA mode: `far_mod` is then
/// the single-user modulation and `near_mod` is empty.
struct ModulationMode {
    int id = 0;
    Modulation far_mod = Modulation::qpsk;
    std::optional<Modulation> near_mod;
    double power_far = 1.0;
    double power_near = 0.0;
    double data_rotation = 0.0;   // θ_l, radians
    double pilot_rotation = 0.0;  // φ_l, radians in [0, 2π)

    bool is_oma() const noexcept { return id == 0; }
};

/// Finite labeled point set. Labels are bit labels, `label_bits` wide.
class Constellation {
public:
    Constellation() = default;

    Constellation(std::vector<cplx> points, std::vector<std::uint32_t> labels, int label_bits)
        : points_(std::move(points)), labels_(std::move(labels)), label_bits_(label_bits)
    {
        if (points_.size() != labels_.size())
            throw std::invalid_argument("constellation: points/labels size mismatch");
    }

    std::span<const cplx> points() const noexcept { return points_; }
    std::span<const std::uint32_t> labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }
    int label_bits() const noexcept { return label_bits_; }
    const cplx& operator[](std::size_t i) const { return points_[i]; }
    std::uint32_t label(std::size_t i) const { return labels_[i]; }

    double avg_power() const noexcept
    {
        if (points_.empty()) return 0.0;
        double s = 0.0;
        for (const auto& p : points_) s += std::norm(p);
        return s / static_cast<double>(points_.size());
    }

    /// Index of the point closest to `y`; ties go to the lower index.
    std::size_t nearest(cplx y) const noexcept
    {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const double d = std::norm(y - points_[i]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

private:
    std::vector<cplx> points_;
    std::vector<std::uint32_t> labels_;
    int label_bits_ = 0;
};

namespace detail {

constexpr std::uint32_t gray(std::uint32_t i) noexcept { return i ^ (i >> 1); }

constexpr int log2_exact(std::uint32_t n) noexcept
{
    int b = 0;
    while ((1u << b) < n) ++b;
    return b;
}

} // namespace detail

/// Unit-average-power square QAM with per-axis Gray labels. The in-phase bits
/// are the label MSBs. Point index = i_I * side + i_Q, levels ascending.
inline Constellation base_constellation(Modulation mod)
{
    const auto order = static_cast<std::uint32_t>(order_of(mod));
    const std::uint32_t side = order == 4 ? 2 : order == 16 ? 4 : 8;
    const int axis_bits = detail::log2_exact(side);
    const double norm = std::sqrt(2.0 * (static_cast<double>(order) - 1.0) / 3.0);

    std::vector<cplx> pts;
    std::vector<std::uint32_t> labels;
    pts.reserve(order);
    labels.reserve(order);
    for (std::uint32_t i = 0; i < side; ++i) {
        const double re = (2.0 * i - (side - 1.0)) / norm;
        for (std::uint32_t q = 0; q < side; ++q) {
            const double im = (2.0 * q - (side - 1.0)) / norm;
            pts.emplace_back(re, im);
            labels.push_back((detail::gray(i) << axis_bits) | detail::gray(q));
        }
    }
    return Constellation(std::move(pts), std::move(labels), 2 * axis_bits);
}

inline Constellation base_constellation(int order) { return base_constellation(modulation_from_order(order)); }

/// Multiplies every point by `amplitude` (power scales by amplitude²).
inline Constellation scale(const Constellation& set, double amplitude)
{
    std::vector<cplx> pts(set.points().begin(), set.points().end());
    for (auto& p : pts) p *= amplitude;
    return Constellation(std::move(pts), {set.labels().begin(), set.labels().end()}, set.label_bits());
}

/// Multiplies every point by e^{jθ}; labels and power are unchanged.
inline Constellation apply_rotation(const Constellation& set, double theta)
{
    if (theta == 0.0) return set;
    const cplx rot = std::polar(1.0, theta);
    std::vector<cplx> pts(set.points().begin(), set.points().end());
    for (auto& p : pts) p *= rot;
    return Constellation(std::move(pts), {set.labels().begin(), set.labels().end()}, set.label_bits());
}

/// χ_l: sums √P_f·a + √P_n·b over the far and near base sets. The label is the
/// far label followed by the near label; index = far_index * |near| + near_index.
inline Constellation composite_constellation(const ModulationMode& mode)
{
    if (mode.is_oma() || !mode.near_mod)
        throw std::invalid_argument("composite undefined for OMA");
    const auto far = base_constellation(mode.far_mod);
    const auto near = base_constellation(*mode.near_mod);
    const double af = std::sqrt(mode.power_far);
    const double an = std::sqrt(mode.power_near);

    std::vector<cplx> pts;
    std::vector<std::uint32_t> labels;
    pts.reserve(far.size() * near.size());
    labels.reserve(far.size() * near.size());
    for (std::size_t i = 0; i < far.size(); ++i) {
        for (std::size_t k = 0; k < near.size(); ++k) {
            pts.push_back(af * far[i] + an * near[k]);
            labels.push_back((far.label(i) << near.label_bits()) | near.label(k));
        }
    }
    return Constellation(std::move(pts), std::move(labels), far.label_bits() + near.label_bits());
}

struct MinDistance {
    double distance = 0.0;
    std::size_t pairs = 0;  // N_min
};

/// Minimum |a − b| over a ∈ A, b ∈ B, with the number of pairs attaining it
/// (relative tolerance 1e-9).
inline MinDistance min_distance(const Constellation& a, const Constellation& b)
{
    if (a.empty() || b.empty()) throw std::invalid_argument("min_distance: empty constellation");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : a.points())
        for (const auto& q : b.points()) best = std::min(best, std::abs(p - q));

    const double tol = 1e-9 * best;
    std::size_t count = 0;
    for (const auto& p : a.points())
        for (const auto& q : b.points())
            if (std::abs(p - q) <= best + tol) ++count;
    return {best, count};
}

/// Immutable mode table with the per-mode constellations precomputed, each
/// rotated by its mode's data rotation θ_l.
class ModeTable {
public:
    struct FarGroup {
        Modulation far_mod;
        int first;  // inclusive mode ids
        int last;
        int count() const noexcept { return last - first + 1; }
    };

    explicit ModeTable(std::vector<ModulationMode> modes) : modes_(std::move(modes))
    {
        validate();
        build();
    }

    std::span<const ModulationMode> modes() const noexcept { return modes_; }
    const ModulationMode& mode(int l) const { return modes_.at(static_cast<std::size_t>(l)); }
    int size() const noexcept { return static_cast<int>(modes_.size()); }
    /// Number of NOMA modes, L.
    int noma_count() const noexcept { return size() - 1; }

    /// χ_l (χ_0 for the OMA mode), rotated by θ_l.
    const Constellation& full_set(int l) const { return full_.at(static_cast<std::size_t>(l)); }
    /// χ_l^f: √P_f·base(m_f), rotated by θ_l. For OMA this equals χ_0.
    const Constellation& far_set(int l) const { return far_.at(static_cast<std::size_t>(l)); }
    /// χ_l^n: √P_n·base(m_n), rotated by θ_l. Empty for OMA.
    const Constellation& near_set(int l) const { return near_.at(static_cast<std::size_t>(l)); }

    std::span<const FarGroup> far_groups() const noexcept { return groups_; }

    std::size_t noma_point_count() const noexcept
    {
        std::size_t n = 0;
        for (int l = 1; l < size(); ++l) n += full_set(l).size();
        return n;
    }

    ModeTable with_data_rotations(std::span<const double> thetas) const
    {
        if (thetas.size() != modes_.size())
            throw std::invalid_argument("rotation list length must equal the number of modes");
        auto m = modes_;
        for (std::size_t i = 0; i < m.size(); ++i) m[i].data_rotation = thetas[i];
        return ModeTable(std::move(m));
    }

    ModeTable with_pilot_rotations(std::span<const double> phis) const
    {
        if (phis.size() != modes_.size())
            throw std::invalid_argument("pilot rotation list length must equal the number of modes");
        auto m = modes_;
        for (std::size_t i = 0; i < m.size(); ++i) m[i].pilot_rotation = wrap_angle(phis[i]);
        return ModeTable(std::move(m));
    }

private:
    void validate() const
    {
        constexpr double tol = 1e-9;
        if (modes_.size() < 2) throw std::invalid_argument("mode table needs the OMA mode and at least one NOMA mode");
        for (std::size_t i = 0; i < modes_.size(); ++i) {
            const auto& m = modes_[i];
            if (m.id != static_cast<int>(i)) throw std::invalid_argument("mode ids must equal their table index");
            if (!std::isfinite(m.data_rotation) || !std::isfinite(m.pilot_rotation))
                throw std::invalid_argument("mode " + std::to_string(i) + ": rotation must be finite");
            if (m.is_oma()) {
                if (m.near_mod) throw std::invalid_argument("OMA mode must not have a near-UT modulation");
                if (std::abs(m.power_far - 1.0) > tol || std::abs(m.power_near) > tol)
                    throw std::invalid_argument("OMA mode must have power_far = 1 and power_near = 0");
                continue;
            }
            if (!m.near_mod) throw std::invalid_argument("mode " + std::to_string(i) + ": NOMA mode needs a near-UT modulation");
            if (m.power_near < 0.0 || m.power_far <= 0.0 || m.power_far > 1.0)
                throw std::invalid_argument("mode " + std::to_string(i) + ": power out of range");
            if (std::abs(m.power_far + m.power_near - 1.0) > tol)
                throw std::invalid_argument("mode " + std::to_string(i) + ": power_far + power_near must equal 1");
            if (!(m.power_far > m.power_near))
                throw std::invalid_argument("mode " + std::to_string(i) + ": far UT must get the larger power share");
        }
        // Modes sharing a far-UT order must be contiguous.
        for (std::size_t i = 1; i < modes_.size(); ++i) {
            for (std::size_t j = i + 2; j < modes_.size(); ++j) {
                if (modes_[i].far_mod == modes_[j].far_mod) {
                    for (std::size_t k = i + 1; k < j; ++k)
                        if (modes_[k].far_mod != modes_[i].far_mod)
                            throw std::invalid_argument("NOMA modes sharing a far-UT modulation must be contiguous");
                }
            }
        }
        for (std::size_t i = 0; i < modes_.size(); ++i)
            for (std::size_t j = i + 1; j < modes_.size(); ++j)
                if (std::abs(wrap_angle(modes_[i].pilot_rotation) - wrap_angle(modes_[j].pilot_rotation)) < 1e-12)
                    throw std::invalid_argument("pilot rotations must be pairwise distinct");
    }

    void build()
    {
        for (const auto& m : modes_) {
            if (m.is_oma()) {
                auto s = apply_rotation(base_constellation(m.far_mod), m.data_rotation);
                full_.push_back(s);
                far_.push_back(std::move(s));
                near_.emplace_back();
                continue;
            }
            full_.push_back(apply_rotation(composite_constellation(m), m.data_rotation));
            far_.push_back(apply_rotation(scale(base_constellation(m.far_mod), std::sqrt(m.power_far)), m.data_rotation));
            near_.push_back(apply_rotation(scale(base_constellation(*m.near_mod), std::sqrt(m.power_near)), m.data_rotation));
        }
        for (int l = 1; l < size(); ++l) {
            if (groups_.empty() || groups_.back().far_mod != modes_[l].far_mod)
                groups_.push_back({modes_[l].far_mod, l, l});
            else
                groups_.back().last = l;
        }
    }

    std::vector<ModulationMode> modes_;
    std::vector<Constellation> full_;
    std::vector<Constellation> far_;
    std::vector<Constellation> near_;
    std::vector<FarGroup> groups_;
};

/// 𝒩: multiset union of every NOMA mode's composite set, in mode order.
/// Duplicates are kept so each mode keeps its weight |χ_l|/|𝒩|. Labels are
/// positions in the union.
inline Constellation noma_union(const ModeTable& table)
{
    std::vector<cplx> pts;
    pts.reserve(table.noma_point_count());
    for (int l = 1; l < table.size(); ++l) {
        const auto p = table.full_set(l).points();
        pts.insert(pts.end(), p.begin(), p.end());
    }
    std::vector<std::uint32_t> labels(pts.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint32_t>(i);
    return Constellation(std::move(pts), std::move(labels), detail::log2_exact(static_cast<std::uint32_t>(labels.size())));
}

} // namespace nbsc

#endif // NBSC_MODSET_HPP
