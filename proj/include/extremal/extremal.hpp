#pragma once

#include "extremal/box_qp.hpp"
#include "extremal/budget.hpp"
#include "extremal/core_form.hpp"
#include "extremal/eigensolver.hpp"
#include "extremal/extremal_p1.hpp"
#include "extremal/extremal_pgt1.hpp"
#include "extremal/oracle.hpp"
#include "extremal/result.hpp"
#include "extremal/solve.hpp"
