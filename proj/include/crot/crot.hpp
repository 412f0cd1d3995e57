#ifndef CROT_CROT_HPP
#define CROT_CROT_HPP

/**
 * @file crot.hpp
 * @brief Convenience header pulling in the whole library.
 */

#include "core.hpp"
#include "ot.hpp"
#include "clustering.hpp"
#include "optim.hpp"
#include "imputer.hpp"
#include "metrics.hpp"
#include "synth.hpp"
#include "io.hpp"
#include "commands.hpp"

#endif
