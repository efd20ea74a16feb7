#pragma once

#include "lol/autodiff.hpp"
#include "lol/core.hpp"
#include "lol/eval.hpp"
#include "lol/index.hpp"
#include "lol/io.hpp"
#include "lol/loss.hpp"
#include "lol/reformulator.hpp"
#include "lol/synth.hpp"
#include "lol/trainer.hpp"
