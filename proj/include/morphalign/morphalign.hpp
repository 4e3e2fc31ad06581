#pragma once

#include "morphalign/conllu.hpp"
#include "morphalign/csv.hpp"
#include "morphalign/error.hpp"
#include "morphalign/gold.hpp"
#include "morphalign/report.hpp"
#include "morphalign/scoring.hpp"
#include "morphalign/stats.hpp"
#include "morphalign/tokenizer.hpp"
#include "morphalign/utf8.hpp"
