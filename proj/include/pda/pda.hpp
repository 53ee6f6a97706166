#pragma once

// Everything at once. Individual headers are self-contained.

#include "pda/ablation.hpp"
#include "pda/config.hpp"
#include "pda/data.hpp"
#include "pda/errors.hpp"
#include "pda/experiment.hpp"
#include "pda/losses.hpp"
#include "pda/metrics.hpp"
#include "pda/nets.hpp"
#include "pda/oracle.hpp"
#include "pda/rng.hpp"
#include "pda/selection.hpp"
#include "pda/tensor.hpp"
#include "pda/theory.hpp"
#include "pda/trainer.hpp"
