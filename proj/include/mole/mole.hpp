#pragma once

#include "mole/error.hpp"
#include "mole/rng.hpp"
#include "mole/linalg.hpp"
#include "mole/d2r.hpp"
#include "mole/morphing.hpp"
#include "mole/augconv.hpp"
#include "mole/attacks.hpp"
#include "mole/metrics.hpp"
#include "mole/toytrain.hpp"
#include "mole/io.hpp"
