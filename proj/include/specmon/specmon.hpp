#pragma once

// Umbrella header: spectrum monitoring with a recurrent one-step predictor,
// sliding-window MMSE interference detection, and a least-squares baseline.

#include "specmon/baseline.hpp"
#include "specmon/config_json.hpp"
#include "specmon/dataset_io.hpp"
#include "specmon/detection.hpp"
#include "specmon/errors.hpp"
#include "specmon/lstm.hpp"
#include "specmon/manifest.hpp"
#include "specmon/model_io.hpp"
#include "specmon/pass.hpp"
#include "specmon/rng.hpp"
#include "specmon/spectrum.hpp"
#include "specmon/synthgen.hpp"
#include "specmon/training.hpp"
