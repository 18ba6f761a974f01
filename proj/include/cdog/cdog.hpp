#pragma once

#include "cdog/baselines.hpp"
#include "cdog/bench.hpp"
#include "cdog/benchmark.hpp"
#include "cdog/error.hpp"
#include "cdog/geometry.hpp"
#include "cdog/graph.hpp"
#include "cdog/io.hpp"
#include "cdog/log.hpp"
#include "cdog/metrics.hpp"
#include "cdog/pipeline.hpp"
#include "cdog/random.hpp"
#include "cdog/refine.hpp"
#include "cdog/scene.hpp"
