#pragma once

#include "stackmanifold/flow/io.hpp"
#include "stackmanifold/flow/loss.hpp"
#include "stackmanifold/flow/map.hpp"
#include "stackmanifold/flow/model.hpp"
#include "stackmanifold/flow/train.hpp"
