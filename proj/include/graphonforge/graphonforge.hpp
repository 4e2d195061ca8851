#pragma once

#include "graphonforge/errors.hpp"
#include "graphonforge/rng.hpp"
#include "graphonforge/json_io.hpp"
#include "graphonforge/multiset.hpp"
#include "graphonforge/graphon.hpp"
#include "graphonforge/density.hpp"
#include "graphonforge/constraint_dsl.hpp"
#include "graphonforge/bounding.hpp"
#include "graphonforge/wpz.hpp"
#include "graphonforge/fixtures.hpp"
#include "graphonforge/series.hpp"
#include "graphonforge/stabilize.hpp"
#include "graphonforge/verify.hpp"
