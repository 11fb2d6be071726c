from pipeline_api.services import SynthService

from ._pipeline import PipelineCommand


class Command(PipelineCommand):
    help = "Generate a synthetic reaction-diffusion dataset (clean and noisy density, optional point records)."
    stage = 'synth'

    def run_stage(self, run, force):
        return SynthService.run(run, force)
