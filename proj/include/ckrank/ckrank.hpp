#pragma once

// Umbrella header: checkpoint transferability scoring and ranking evaluation.

#include "ckrank/errors.hpp"
#include "ckrank/gmm.hpp"
#include "ckrank/harness.hpp"
#include "ckrank/io.hpp"
#include "ckrank/metrics.hpp"
#include "ckrank/pca.hpp"
#include "ckrank/rng.hpp"
#include "ckrank/scores.hpp"
#include "ckrank/synthetic.hpp"
#include "ckrank/types.hpp"
#include "ckrank/version.hpp"
