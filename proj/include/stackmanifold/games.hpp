#pragma once

#include "stackmanifold/games/env.hpp"
#include "stackmanifold/games/npg.hpp"
#include "stackmanifold/games/r1.hpp"
#include "stackmanifold/games/separable.hpp"
#include "stackmanifold/games/ssg.hpp"
