#pragma once

#include "falcon/analysis.hpp"
#include "falcon/cli.hpp"
#include "falcon/conv.hpp"
#include "falcon/errors.hpp"
#include "falcon/falcon_ops.hpp"
#include "falcon/fitting.hpp"
#include "falcon/gep.hpp"
#include "falcon/io.hpp"
#include "falcon/svd.hpp"
#include "falcon/tensor.hpp"
