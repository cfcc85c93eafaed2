#ifndef NBSC_NBSC_HPP
#define NBSC_NBSC_HPP

#include "analysis.hpp"
#include "channel.hpp"
#include "experiment.hpp"
#include "mlc.hpp"
#include "modset.hpp"
#include "optimize.hpp"
#include "prc.hpp"
#include "presets.hpp"
#include "receiver.hpp"
#include "rng.hpp"
#include "sim.hpp"

#endif // NBSC_NBSC_HPP
