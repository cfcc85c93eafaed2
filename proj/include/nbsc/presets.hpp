#ifndef NBSC_PRESETS_HPP
#define NBSC_PRESETS_HPP

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "modset.hpp"

namespace nbsc::presets {

struct Row {
    Modulation far;
    std::optional<Modulation> near;
    double power_far;
};

/// Builds a table from (far, near, far power) rows; row 0 is OMA. Pilot
/// rotations get the uniform assignment 2πl/(L+1) so the table is valid for
/// pilot-based classification out of the box.
inline ModeTable make_table(std::initializer_list<Row> rows)
{
    std::vector<ModulationMode> modes;
    const int n = static_cast<int>(rows.size());
    int id = 0;
    for (const auto& r : rows) {
        ModulationMode m;
        m.id = id;
        m.far_mod = r.far;
        m.near_mod = r.near;
        m.power_far = r.power_far;
        m.power_near = id == 0 ? 0.0 : 1.0 - r.power_far;
        m.pilot_rotation = two_pi * id / n;
        modes.push_back(m);
        ++id;
    }
    return ModeTable(std::move(modes));
}

/// Fixed far UT modulation, three power ratios.
inline ModeTable case1()
{
    using enum Modulation;
    return make_table({{qpsk, std::nullopt, 1.0},
                       {qpsk, qpsk, 0.8},
                       {qpsk, qpsk, 0.8621},
                       {qpsk, qpsk, 0.9163}});
}

/// One power ratio per far UT modulation.
inline ModeTable case2()
{
    using enum Modulation;
    return make_table({{qam16, std::nullopt, 1.0},
                       {qpsk, qam16, 0.8653},
                       {qam16, qam16, 0.95}});
}

/// Both power ratio and far UT modulation vary.
inline ModeTable case3()
{
    using enum Modulation;
    return make_table({{qam16, std::nullopt, 1.0},
                       {qpsk, qam16, 0.7619},
                       {qpsk, qam16, 0.8653},
                       {qpsk, qam16, 0.9275},
                       {qam16, qam16, 0.95},
                       {qam16, qam16, 0.97}});
}

inline ModeTable by_name(std::string_view name)
{
    if (name == "case1") return case1();
    if (name == "case2") return case2();
    if (name == "case3") return case3();
    throw std::invalid_argument("unknown preset: " + std::string(name));
}

/// OMA data rotation θ_0 used for the phase-rotated variant of each preset
/// (optimized at 13, 20 and 20 dB respectively).
inline double prm_theta0(std::string_view name)
{
    if (name == "case1") return 0.6;
    if (name == "case2") return 0.51;
    if (name == "case3") return 0.69;
    throw std::invalid_argument("unknown preset: " + std::string(name));
}

} // namespace nbsc::presets

#endif // NBSC_PRESETS_HPP
