/* cc -Icrates/ffi/include crates/ffi/examples/smoke.c -Ltarget/debug -lreprompt_control_ffi */
#include <stdio.h>
#include "reprompt_control.h"

int main(void) {
    RcTwin *twin = NULL;
    if (rc_twin_new_default(&twin) != RC_STATUS_OK) {
        fprintf(stderr, "%s\n", rc_last_error());
        return 1;
    }
    rc_twin_step(twin, 100.0, 600.0);
    RcTwinState s;
    rc_twin_state(twin, &s);
    printf("after 600 s at full duty: heater %.2f, sensor %.2f\n", s.t_heater, s.t_sensor);

    if (rc_twin_step(twin, 250.0, 1.0) != RC_STATUS_OK)
        printf("rejected: %s\n", rc_last_error());
    rc_twin_free(twin);

    RcAction a;
    rc_expected_action(27.4, RC_ACTION_ON, 25.0, 27.0, &a);
    printf("expected action at 27.4: %s\n", a == RC_ACTION_ON ? "ON" : "OFF");

    RcPlantServer *plant = NULL;
    rc_plant_server_new(NULL, true, &plant);
    char *reply = NULL;
    rc_plant_server_command(plant, "VER", &reply);
    printf("VER -> %s\n", reply);
    rc_string_free(reply);
    rc_plant_server_free(plant);
    return 0;
}
