from pipeline_api.services import EvaluateService

from ._pipeline import PipelineCommand


class Command(PipelineCommand):
    help = "Compute the N_data, N_u, N_fwd and N_SR count curves and their metrics."
    stage = 'evaluate'

    def run_stage(self, run, force):
        return EvaluateService.run(run, force)
