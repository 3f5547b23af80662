#pragma once

#include "rnoma/channel.hpp"
#include "rnoma/config.hpp"
#include "rnoma/markov.hpp"
#include "rnoma/optimizer.hpp"
#include "rnoma/random.hpp"
#include "rnoma/sic.hpp"
#include "rnoma/simulator.hpp"
#include "rnoma/validation.hpp"

namespace rnoma {
inline constexpr const char* kVersion = "0.1.0";
}
