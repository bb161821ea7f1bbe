#pragma once

#include "covshift/dataset.hpp"
#include "covshift/estimators.hpp"
#include "covshift/features.hpp"
#include "covshift/harness.hpp"
#include "covshift/nuisance.hpp"
#include "covshift/policy.hpp"
#include "covshift/report.hpp"
#include "covshift/simulate.hpp"
#include "covshift/stats.hpp"
