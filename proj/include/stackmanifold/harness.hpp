#pragma once

#include "stackmanifold/harness/config.hpp"
#include "stackmanifold/harness/experiment.hpp"
#include "stackmanifold/harness/output.hpp"
#include "stackmanifold/harness/runner.hpp"
