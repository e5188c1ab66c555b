#pragma once

#include "snm/adjustment.hpp"
#include "snm/adjustment_model.hpp"
#include "snm/corpus.hpp"
#include "snm/counts.hpp"
#include "snm/error.hpp"
#include "snm/extraction.hpp"
#include "snm/hash.hpp"
#include "snm/metafeatures.hpp"
#include "snm/model.hpp"
