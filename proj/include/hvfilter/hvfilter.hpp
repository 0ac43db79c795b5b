#pragma once

#include "hvfilter/types.hpp"
#include "hvfilter/pattern.hpp"
#include "hvfilter/hierarchy.hpp"
#include "hvfilter/sparse_core.hpp"
#include "hvfilter/matrix_market.hpp"
#include "hvfilter/hv_inference.hpp"
#include "hvfilter/likelihoods.hpp"
#include "hvfilter/filters.hpp"
#include "hvfilter/models.hpp"
#include "hvfilter/parallel.hpp"
#include "hvfilter/evaluation.hpp"
#include "hvfilter/config.hpp"
