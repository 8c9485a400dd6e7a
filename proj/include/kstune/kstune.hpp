#pragma once

#include "kstune/error.hpp"
#include "kstune/random.hpp"
#include "kstune/core.hpp"
#include "kstune/assemble.hpp"
#include "kstune/kkt.hpp"
#include "kstune/smoother.hpp"
#include "kstune/grad.hpp"
#include "kstune/prox.hpp"
#include "kstune/autotune.hpp"
#include "kstune/datagen.hpp"
#include "kstune/bench.hpp"
#include "kstune/io.hpp"
