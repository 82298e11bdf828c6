/** Workflow wizard state: ordered steps, each gated on the previous step's
 * server response. Pure state machine; the DOM layer just reflects it. */

export const WIZARD_STEPS = [
  "upload",
  "validate",
  "labelmap",
  "split_augment",
  "model",
  "review",
  "start",
] as const;

export type WizardStep = (typeof WIZARD_STEPS)[number];

export class WizardState {
  private results = new Map<WizardStep, unknown>();

  indexOf(step: WizardStep): number {
    return WIZARD_STEPS.indexOf(step);
  }

  /** A step is enterable only when every earlier step has completed. */
  canEnter(step: WizardStep): boolean {
    const index = this.indexOf(step);
    return WIZARD_STEPS.slice(0, index).every((s) => this.results.has(s));
  }

  complete(step: WizardStep, result: unknown): void {
    if (!this.canEnter(step)) {
      throw new Error(`step '${step}' is gated on earlier steps`);
    }
    this.results.set(step, result);
    // invalidate everything after a redone step
    for (const later of WIZARD_STEPS.slice(this.indexOf(step) + 1)) {
      this.results.delete(later);
    }
  }

  resultOf<T>(step: WizardStep): T | undefined {
    return this.results.get(step) as T | undefined;
  }

  get currentStep(): WizardStep {
    for (const step of WIZARD_STEPS) {
      if (!this.results.has(step)) {
        return step;
      }
    }
    return WIZARD_STEPS[WIZARD_STEPS.length - 1];
  }
}
