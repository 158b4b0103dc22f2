#pragma once

#include "agc/block_index.hpp"
#include "agc/conic/backend.hpp"
#include "agc/contract_sdp.hpp"
#include "agc/infograph.hpp"
#include "agc/instance_io.hpp"
#include "agc/lifting.hpp"
#include "agc/model.hpp"
#include "agc/report_io.hpp"
#include "agc/simulate.hpp"
