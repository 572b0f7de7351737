#pragma once

// Convenience include for the whole library.

#include "mobipipe/common.hpp"
#include "mobipipe/rng.hpp"
#include "mobipipe/csv.hpp"
#include "mobipipe/xdf.hpp"
#include "mobipipe/align.hpp"
#include "mobipipe/fir.hpp"
#include "mobipipe/events.hpp"
#include "mobipipe/stats.hpp"
#include "mobipipe/ica.hpp"
#include "mobipipe/preprocess.hpp"
#include "mobipipe/analysis.hpp"
#include "mobipipe/synth.hpp"
#include "mobipipe/pipeline.hpp"
