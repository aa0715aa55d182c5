package shop.orders;

import org.springframework.web.bind.annotation.*;

@RestController
@RequestMapping("/api/admin")
public class AdminController {

    private final OrderRepository orderRepository;

    public AdminController(OrderRepository orderRepository) {
        this.orderRepository = orderRepository;
    }

    @DeleteMapping("/orders/{id}")
    public void purge(@PathVariable("id") long id) {
        orderRepository.findById(id);
    }
}
