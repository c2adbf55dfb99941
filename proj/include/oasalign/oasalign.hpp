#pragma once

#include "oasalign/attention_store.hpp"
#include "oasalign/corpus_stats.hpp"
#include "oasalign/losses.hpp"
#include "oasalign/oas.hpp"
#include "oasalign/reports.hpp"
#include "oasalign/seed.hpp"
#include "oasalign/supervision.hpp"
#include "oasalign/synth.hpp"
#include "oasalign/viterbi.hpp"
#include "oasalign/selfcheck.hpp"
