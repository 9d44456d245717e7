#ifndef LAYERPOT_LAYERPOT_HPP
#define LAYERPOT_LAYERPOT_HPP

#include "layerpot/common.hpp"
#include "layerpot/quadrature.hpp"
#include "layerpot/geometry.hpp"
#include "layerpot/coefficients.hpp"
#include "layerpot/greens.hpp"
#include "layerpot/linalg.hpp"
#include "layerpot/potentials.hpp"
#include "layerpot/solvers.hpp"
#include "layerpot/io.hpp"
#include "layerpot/verify.hpp"

#endif  // LAYERPOT_LAYERPOT_HPP
