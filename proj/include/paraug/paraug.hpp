#pragma once

#include "paraug/augment.hpp"
#include "paraug/config.hpp"
#include "paraug/dataset.hpp"
#include "paraug/degrade.hpp"
#include "paraug/image.hpp"
#include "paraug/loss.hpp"
#include "paraug/metrics.hpp"
#include "paraug/orchestrator.hpp"
#include "paraug/prompt.hpp"
#include "paraug/review.hpp"
#include "paraug/scorer.hpp"
#include "paraug/services.hpp"
