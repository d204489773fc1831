#ifndef DRGP_DRGP_HPP
#define DRGP_DRGP_HPP

#include "drgp/embeddings.hpp"
#include "drgp/errors.hpp"
#include "drgp/eval.hpp"
#include "drgp/experiment.hpp"
#include "drgp/gp_core.hpp"
#include "drgp/io.hpp"
#include "drgp/kernels.hpp"
#include "drgp/log.hpp"
#include "drgp/optimizer.hpp"
#include "drgp/pipeline.hpp"
#include "drgp/propensity.hpp"
#include "drgp/random.hpp"
#include "drgp/response.hpp"
#include "drgp/simgen.hpp"

#endif // DRGP_DRGP_HPP
