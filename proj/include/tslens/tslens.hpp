#pragma once

#include "tslens/blocks.hpp"
#include "tslens/common.hpp"
#include "tslens/io.hpp"
#include "tslens/matrix.hpp"
#include "tslens/model.hpp"
#include "tslens/parallel.hpp"
#include "tslens/persist.hpp"
#include "tslens/probe.hpp"
#include "tslens/rng.hpp"
#include "tslens/similarity.hpp"
#include "tslens/steer.hpp"
#include "tslens/synthgen.hpp"
