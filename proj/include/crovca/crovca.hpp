#pragma once

#include "crovca/adamw.hpp"
#include "crovca/codes.hpp"
#include "crovca/dataio.hpp"
#include "crovca/errors.hpp"
#include "crovca/evalkit.hpp"
#include "crovca/hashcoder.hpp"
#include "crovca/labels.hpp"
#include "crovca/numkit.hpp"
#include "crovca/objective.hpp"
#include "crovca/pairing.hpp"
#include "crovca/retrieval.hpp"
#include "crovca/trainer.hpp"
