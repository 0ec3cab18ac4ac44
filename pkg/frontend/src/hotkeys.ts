/** Keyboard-first interaction: map single keys to actions, but never steal
 * keystrokes from text inputs (the finding search box). */

export type KeyBindings = Record<string, () => void>;

export function createHotkeyHandler(bindings: KeyBindings): (event: KeyboardEvent) => void {
  return (event: KeyboardEvent) => {
    if (
      event.target instanceof HTMLInputElement ||
      event.target instanceof HTMLTextAreaElement
    ) {
      return;
    }
    if (event.ctrlKey || event.metaKey || event.altKey) return;
    const action = bindings[event.key.toLowerCase()];
    if (action) {
      event.preventDefault();
      action();
    }
  };
}
