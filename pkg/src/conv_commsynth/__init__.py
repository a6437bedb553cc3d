"""conv-commsynth: planning and verification for communication-efficient
distributed CNN forward convolution."""

from .errors import (CapacityTooSmall, CommSynthError, ConstraintViolated,
                     DataMissing, GridProductMismatch, GroupIndivisible,
                     Infeasible, MemoryExceeded, MemoryOverflow,
                     NoFeasibleInteger, NonDividingPartition, ParseError,
                     PartitionInvalid, SearchSpaceTooLarge, ShapeMismatch,
                     SubSliceIndivisible, ValidationError)
from .grid import (DistributionPlan, OwnershipRecord, ProcGrid, derive_grid,
                   ensure_distributable, halo_ownership_uniform,
                   plan_distribution, serialize_distribution)
from .model import (ConvProblem, CostBreakdown, DistributedCost, MachineSpec,
                    PartitionPlan, TilePlan, cost_distributed, cost_global,
                    cost_sequential, cost_simplified, footprint_in,
                    footprint_ker, footprint_out, memory_distributed,
                    tile_memory)
from .optimizer import (ClosedFormSolution, IntegerPlan, OracleLimits,
                        brute_force_oracle, effective_capacity, integerize,
                        solve_closed_form)
from .pipeline import SynthesisResult, synthesize
from .schedule import (BroadcastRecord, CommSchedule, ScheduleStep,
                       TileBuffers, build_schedule, schedule_volume,
                       serialize_schedule)
from .simulator import (SimConfig, SimReport, generate_tensors,
                        reference_convolution, run, verify_identities)

__version__ = "0.1.0"
