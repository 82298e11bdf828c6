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
];
export class WizardState {
    results = new Map();
    indexOf(step) {
        return WIZARD_STEPS.indexOf(step);
    }
    /** A step is enterable only when every earlier step has completed. */
    canEnter(step) {
        const index = this.indexOf(step);
        return WIZARD_STEPS.slice(0, index).every((s) => this.results.has(s));
    }
    complete(step, result) {
        if (!this.canEnter(step)) {
            throw new Error(`step '${step}' is gated on earlier steps`);
        }
        this.results.set(step, result);
        // invalidate everything after a redone step
        for (const later of WIZARD_STEPS.slice(this.indexOf(step) + 1)) {
            this.results.delete(later);
        }
    }
    resultOf(step) {
        return this.results.get(step);
    }
    get currentStep() {
        for (const step of WIZARD_STEPS) {
            if (!this.results.has(step)) {
                return step;
            }
        }
        return WIZARD_STEPS[WIZARD_STEPS.length - 1];
    }
}
