#pragma once

#include "s1avg/averaging.hpp"
#include "s1avg/bounds.hpp"
#include "s1avg/common.hpp"
#include "s1avg/flows.hpp"
#include "s1avg/geometry.hpp"
#include "s1avg/harness.hpp"
#include "s1avg/normalform.hpp"
#include "s1avg/vfdsl.hpp"
