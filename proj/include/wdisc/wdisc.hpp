#pragma once

// Pulls in the whole library.

#include "wdisc/alignment.hpp"
#include "wdisc/checkpoint.hpp"
#include "wdisc/corpus.hpp"
#include "wdisc/discovery.hpp"
#include "wdisc/error.hpp"
#include "wdisc/evaluation.hpp"
#include "wdisc/graph.hpp"
#include "wdisc/model.hpp"
#include "wdisc/numerics.hpp"
#include "wdisc/pipeline.hpp"
#include "wdisc/random.hpp"
#include "wdisc/synthcorpus.hpp"
#include "wdisc/tensor.hpp"
#include "wdisc/training.hpp"
#include "wdisc/unicode.hpp"
