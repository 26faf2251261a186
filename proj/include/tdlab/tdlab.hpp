#pragma once

#include "tdlab/agents/factory.hpp"
#include "tdlab/agents/tabular.hpp"
#include "tdlab/approx/checkpoint.hpp"
#include "tdlab/approx/grad_check.hpp"
#include "tdlab/approx/mlp.hpp"
#include "tdlab/approx/optimizer.hpp"
#include "tdlab/buffer/replay.hpp"
#include "tdlab/env/user_env.hpp"
#include "tdlab/harness/agent_checkpoint.hpp"
#include "tdlab/harness/config.hpp"
#include "tdlab/harness/sweep.hpp"
#include "tdlab/harness/training.hpp"
#include "tdlab/oracle/fixtures.hpp"
#include "tdlab/oracle/mdp_io.hpp"
#include "tdlab/oracle/tabular.hpp"
#include "tdlab/tdcore/alignment.hpp"
#include "tdlab/tdcore/losses.hpp"
