/** Payload shapes of the server API the console talks to. */
export {};
