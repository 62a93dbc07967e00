#pragma once

#include "qcert/common.hpp"
#include "qcert/hamiltonian.hpp"
#include "qcert/constraint_space.hpp"
#include "qcert/sdp_solver.hpp"
#include "qcert/relaxation.hpp"
#include "qcert/environment.hpp"
#include "qcert/qnetwork.hpp"
#include "qcert/agents.hpp"
#include "qcert/patterns.hpp"
#include "qcert/config.hpp"
#include "qcert/bench.hpp"
