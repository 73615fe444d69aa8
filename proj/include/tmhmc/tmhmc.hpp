#pragma once

#include "tmhmc/ad.hpp"
#include "tmhmc/diagnostics.hpp"
#include "tmhmc/eis.hpp"
#include "tmhmc/errors.hpp"
#include "tmhmc/hmc.hpp"
#include "tmhmc/io.hpp"
#include "tmhmc/linalg.hpp"
#include "tmhmc/models/cev.hpp"
#include "tmhmc/models/common.hpp"
#include "tmhmc/models/gamma.hpp"
#include "tmhmc/models/lingauss.hpp"
#include "tmhmc/models/sv.hpp"
#include "tmhmc/models/wishart.hpp"
#include "tmhmc/rng.hpp"
#include "tmhmc/transport.hpp"
