#pragma once

#include "reacta/actr.hpp"
#include "reacta/autodiff.hpp"
#include "reacta/bpr.hpp"
#include "reacta/checkpoint.hpp"
#include "reacta/corpus.hpp"
#include "reacta/embeddings.hpp"
#include "reacta/eval.hpp"
#include "reacta/gradcheck.hpp"
#include "reacta/manifest.hpp"
#include "reacta/model.hpp"
#include "reacta/optim.hpp"
#include "reacta/rng.hpp"
#include "reacta/scoring.hpp"
#include "reacta/synthetic.hpp"
#include "reacta/tensor.hpp"
#include "reacta/training.hpp"
