#pragma once

#include "dyncode/error.hpp"
#include "dyncode/trace.hpp"
#include "dyncode/trace_io.hpp"
#include "dyncode/toyvm.hpp"
#include "dyncode/assembler.hpp"
#include "dyncode/phases.hpp"
#include "dyncode/cfg.hpp"
#include "dyncode/postdom.hpp"
#include "dyncode/dcfg.hpp"
#include "dyncode/dot.hpp"
#include "dyncode/dependence.hpp"
#include "dyncode/slicer.hpp"
#include "dyncode/trigger.hpp"
